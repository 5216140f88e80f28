// Top-down orthographic rendering of the world cloud, vehicle, markers, and
// recorded path on a 2D canvas. Cloud points are colored by height.

import type { ViewModel } from "./viewmodel.js";

const BG = "#10141a";
const PATH_COLOR = "#4dd0e1";
const MARKER_COLOR = "#ffb300";
const VEHICLE_COLOR = "#ff5252";

function heightColor(z: number): string {
  // Cold-to-warm ramp over roughly -0.5..3 m.
  const t = Math.max(0, Math.min(1, (z + 0.5) / 3.5));
  const r = Math.round(40 + 215 * t);
  const g = Math.round(90 + 120 * (1 - Math.abs(t - 0.5) * 2));
  const b = Math.round(220 - 180 * t);
  return `rgb(${r},${g},${b})`;
}

export class TopDownRenderer {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2D canvas context unavailable");
    this.ctx = ctx;
  }

  private scaleFor(vm: ViewModel): { s: number; cx: number; cy: number } {
    const [xmin, xmax, ymin, ymax] = vm.extent;
    const margin = 0.95;
    const s = Math.min(
      (this.canvas.width * margin) / (xmax - xmin),
      (this.canvas.height * margin) / (ymax - ymin),
    );
    return { s, cx: (xmin + xmax) / 2, cy: (ymin + ymax) / 2 };
  }

  private toScreen(
    x: number,
    y: number,
    view: { s: number; cx: number; cy: number },
  ): [number, number] {
    return [
      this.canvas.width / 2 + (x - view.cx) * view.s,
      this.canvas.height / 2 - (y - view.cy) * view.s,
    ];
  }

  draw(vm: ViewModel): void {
    const ctx = this.ctx;
    const view = this.scaleFor(vm);
    ctx.fillStyle = BG;
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    for (const p of vm.scan) {
      const [x, y, z] = [p[0] ?? 0, p[1] ?? 0, p[2] ?? 0];
      const [sx, sy] = this.toScreen(x, y, view);
      ctx.fillStyle = heightColor(z);
      ctx.fillRect(sx, sy, 2, 2);
    }

    if (vm.path.length > 1) {
      ctx.strokeStyle = PATH_COLOR;
      ctx.lineWidth = 2;
      ctx.beginPath();
      vm.path.forEach((p, i) => {
        const [sx, sy] = this.toScreen(p[0] ?? 0, p[1] ?? 0, view);
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.stroke();
    }

    ctx.fillStyle = MARKER_COLOR;
    for (const m of vm.markers) {
      const [sx, sy] = this.toScreen(m[0] ?? 0, m[1] ?? 0, view);
      ctx.beginPath();
      ctx.arc(sx, sy, 4, 0, 2 * Math.PI);
      ctx.fill();
    }

    // Vehicle: a heading triangle.
    const [vx, vy, , yaw] = vm.pose;
    const [sx, sy] = this.toScreen(vx, vy, view);
    const size = Math.max(6, 1.0 * view.s);
    ctx.save();
    ctx.translate(sx, sy);
    ctx.rotate(-yaw);
    ctx.fillStyle = VEHICLE_COLOR;
    ctx.beginPath();
    ctx.moveTo(size, 0);
    ctx.lineTo(-size * 0.6, size * 0.5);
    ctx.lineTo(-size * 0.6, -size * 0.5);
    ctx.closePath();
    ctx.fill();
    ctx.restore();
  }
}
