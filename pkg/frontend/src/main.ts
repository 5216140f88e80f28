// Browser entry: wires canvas, keyboard, teach controls, and status HUD.

import { TeleopClient } from "./client.js";
import { TopDownRenderer } from "./render.js";
import type { ViewModel } from "./viewmodel.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const badge = el<HTMLSpanElement>("badge");
const status = el<HTMLSpanElement>("status");
const summaryBox = el<HTMLDivElement>("summary");
const retryBtn = el<HTMLButtonElement>("retry");

const renderer = new TopDownRenderer(canvas);

function refresh(vm: ViewModel): void {
  renderer.draw(vm);
  badge.textContent = vm.mode;
  badge.className = `badge ${vm.mode}`;
  retryBtn.style.display = vm.health === "lost" ? "inline-block" : "none";
  if (vm.lastError) {
    status.textContent = vm.lastError;
    status.className = "error";
  } else {
    status.textContent = `${vm.health} | session ${vm.session || "-"} | tick ${vm.tick}`;
    status.className = "";
  }
  if (vm.summary) {
    summaryBox.textContent =
      `taught: ${vm.summary.vertexCount} vertices, ` +
      `${vm.summary.pathLength.toFixed(1)} m, ` +
      `${vm.summary.markerCount} markers -> ${vm.summary.artifactsDir}`;
  } else {
    summaryBox.textContent = "";
  }
}

const params = new URLSearchParams(window.location.search);
const url =
  params.get("server") ?? `ws://${window.location.hostname || "127.0.0.1"}:8750/`;
const client = new TeleopClient(url, refresh);

window.addEventListener("keydown", (e) => {
  if (!e.repeat) client.input.keyDown(e.key);
});
window.addEventListener("keyup", (e) => client.input.keyUp(e.key));
window.addEventListener("blur", () => client.input.clear());

el<HTMLButtonElement>("start").onclick = () => client.control("start_teach");
el<HTMLButtonElement>("finish").onclick = () => client.control("finish_teach");
el<HTMLButtonElement>("abort").onclick = () => client.control("abort_teach");
retryBtn.onclick = () => client.retry();

client.connect();
