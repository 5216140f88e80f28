import { describe, expect, it } from "vitest";

import { DriveInput } from "../src/input.js";

describe("DriveInput", () => {
  it("maps forward keys to positive v", () => {
    const input = new DriveInput(1.0, 0.9);
    input.keyDown("w");
    expect(input.command()).toEqual({ v: 1.0, omega: 0 });
    input.keyUp("w");
    input.keyDown("ArrowUp");
    expect(input.command().v).toBe(1.0);
  });

  it("combines forward and left into an arcing twist", () => {
    const input = new DriveInput(1.0, 0.9);
    input.keyDown("w");
    input.keyDown("a");
    expect(input.command()).toEqual({ v: 1.0, omega: 0.9 });
  });

  it("right turn is negative omega", () => {
    const input = new DriveInput();
    input.keyDown("d");
    expect(input.command().omega).toBeLessThan(0);
  });

  it("release returns to zero and deactivates", () => {
    const input = new DriveInput();
    input.keyDown("w");
    expect(input.active).toBe(true);
    input.keyUp("w");
    expect(input.active).toBe(false);
    expect(input.command()).toEqual({ v: 0, omega: 0 });
  });

  it("space overrides everything with a stop", () => {
    const input = new DriveInput();
    input.keyDown("w");
    input.keyDown(" ");
    expect(input.command()).toEqual({ v: 0, omega: 0 });
    expect(input.active).toBe(true); // still actively commanding zero
  });

  it("opposing keys cancel", () => {
    const input = new DriveInput();
    input.keyDown("w");
    input.keyDown("s");
    expect(input.command().v).toBe(0);
  });

  it("clear drops all held keys (window blur)", () => {
    const input = new DriveInput();
    input.keyDown("w");
    input.clear();
    expect(input.active).toBe(false);
  });
});
