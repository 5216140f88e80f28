import { describe, expect, it } from "vitest";

import type { StateMsg } from "../src/protocol.js";
import { ViewModel } from "../src/viewmodel.js";

function state(tick: number, x = 0): StateMsg {
  return {
    type: "state",
    tick,
    mode: "teaching",
    pose: [x, 0, 0, 0],
    scan: [],
    markers: [],
    path: [],
  };
}

describe("ViewModel", () => {
  it("applies snapshots in tick order", () => {
    const vm = new ViewModel();
    expect(vm.apply(state(2, 1.0))).toBe(true);
    expect(vm.pose[0]).toBe(1.0);
    expect(vm.apply(state(4, 2.0))).toBe(true);
    expect(vm.pose[0]).toBe(2.0);
  });

  it("drops stale and duplicate snapshots", () => {
    const vm = new ViewModel();
    vm.apply(state(10, 5.0));
    expect(vm.apply(state(10, 9.0))).toBe(false);
    expect(vm.apply(state(8, 9.0))).toBe(false);
    expect(vm.pose[0]).toBe(5.0); // unchanged
  });

  it("tracks connection health through hello and closed", () => {
    const vm = new ViewModel();
    expect(vm.health).toBe("connecting");
    vm.apply({
      type: "hello",
      session: "abc",
      protocol: 1,
      tick: 0,
      rate: 20,
      extent: [-10, 10, -10, 10],
    });
    expect(vm.health).toBe("connected");
    expect(vm.session).toBe("abc");
    vm.apply({ type: "closed" });
    expect(vm.health).toBe("lost");
  });

  it("surfaces server errors verbatim", () => {
    const vm = new ViewModel();
    vm.apply({ type: "error", error: "PathTooShort", message: "only 1 recorded steps" });
    expect(vm.lastError).toBe("PathTooShort: only 1 recorded steps");
  });

  it("stores the finish summary and clears it on start", () => {
    const vm = new ViewModel();
    vm.apply({
      type: "control_ack",
      action: "finish_teach",
      mode: "idle",
      vertex_count: 9,
      path_length: 21.5,
      marker_count: 1,
      artifacts_dir: "/tmp/x",
    });
    expect(vm.summary).toEqual({
      vertexCount: 9,
      pathLength: 21.5,
      markerCount: 1,
      artifactsDir: "/tmp/x",
    });
    vm.apply({ type: "control_ack", action: "start_teach", mode: "teaching" });
    expect(vm.summary).toBeNull();
    expect(vm.mode).toBe("teaching");
  });

  it("ignores heartbeat for rendering but records the tick", () => {
    const vm = new ViewModel();
    expect(vm.apply({ type: "heartbeat", tick: 77 })).toBe(false);
    expect(vm.lastHeartbeatTick).toBe(77);
  });
});
