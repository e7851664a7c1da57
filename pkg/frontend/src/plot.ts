// Minimal rolling time-series renderer on a 2D canvas; no dependencies.

import { Frame } from "./protocol.js";

export interface TraceSpec {
  label: string;
  color: string;
  value: (f: Frame) => number;
}

export interface PlotOptions {
  yMin?: number;
  yMax?: number;
}

const BG = "#10151c";
const GRID = "#273242";
const TEXT = "#8fa3bb";

export class RollingPlot {
  private ctx: CanvasRenderingContext2D;

  constructor(
    private canvas: HTMLCanvasElement,
    private title: string,
    private traces: TraceSpec[],
    private opts: PlotOptions = {},
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
  }

  render(frames: Frame[], windowSeconds: number): void {
    const { ctx, canvas } = this;
    const w = canvas.width;
    const h = canvas.height;
    ctx.fillStyle = BG;
    ctx.fillRect(0, 0, w, h);

    const tEnd = frames.length ? frames[frames.length - 1].t : windowSeconds;
    const t0 = tEnd - windowSeconds;

    let yMin = this.opts.yMin ?? Infinity;
    let yMax = this.opts.yMax ?? -Infinity;
    if (this.opts.yMin === undefined || this.opts.yMax === undefined) {
      for (const f of frames) {
        for (const tr of this.traces) {
          const v = tr.value(f);
          if (v < yMin) yMin = v;
          if (v > yMax) yMax = v;
        }
      }
      if (!Number.isFinite(yMin)) { yMin = -1; yMax = 1; }
      if (yMax - yMin < 1e-9) { yMax += 1; yMin -= 1; }
      const pad = 0.08 * (yMax - yMin);
      yMin -= pad;
      yMax += pad;
    }

    const px = (t: number) => ((t - t0) / windowSeconds) * w;
    const py = (v: number) => h - ((v - yMin) / (yMax - yMin)) * h;

    ctx.strokeStyle = GRID;
    ctx.lineWidth = 1;
    ctx.beginPath();
    for (let k = 1; k < 4; k++) {
      const y = (h * k) / 4;
      ctx.moveTo(0, y);
      ctx.lineTo(w, y);
    }
    for (let k = 1; k < 5; k++) {
      const x = (w * k) / 5;
      ctx.moveTo(x, 0);
      ctx.lineTo(x, h);
    }
    ctx.stroke();
    if (yMin < 0 && yMax > 0) {
      ctx.strokeStyle = "#3a485c";
      ctx.beginPath();
      ctx.moveTo(0, py(0));
      ctx.lineTo(w, py(0));
      ctx.stroke();
    }

    for (const tr of this.traces) {
      ctx.strokeStyle = tr.color;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      let pen = false;
      for (const f of frames) {
        const x = px(f.t);
        const y = py(tr.value(f));
        if (pen) ctx.lineTo(x, y);
        else { ctx.moveTo(x, y); pen = true; }
      }
      ctx.stroke();
    }

    ctx.fillStyle = TEXT;
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText(this.title, 8, 16);
    ctx.fillText(yMax.toFixed(1), 8, 30);
    ctx.fillText(yMin.toFixed(1), 8, h - 6);
    let lx = w - 8;
    for (let i = this.traces.length - 1; i >= 0; i--) {
      const tr = this.traces[i];
      const tw = ctx.measureText(tr.label).width;
      lx -= tw;
      ctx.fillStyle = tr.color;
      ctx.fillText(tr.label, lx, 16);
      lx -= 14;
    }
  }
}
