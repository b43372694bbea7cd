// Paint a contour view model onto a 2D context.  The context is the
// narrow structural interface below rather than CanvasRenderingContext2D
// so tests can record draw calls without a real canvas.

import type { ContourViewModel } from "./contour.js";

export interface Context2dLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  textBaseline: CanvasTextBaseline;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export function drawContour(ctx: Context2dLike, vm: ContourViewModel): void {
  ctx.clearRect(0, 0, vm.width, vm.height);

  for (const cell of vm.cells) {
    ctx.fillStyle = cell.color;
    // overdraw by a hair so antialiasing cannot open seams between cells
    ctx.fillRect(cell.x, cell.y, cell.w + 0.5, cell.h + 0.5);
  }

  ctx.lineWidth = 1.25;
  ctx.strokeStyle = "#222";
  for (const line of vm.isolines) {
    if (line.segments.length === 0) continue;
    ctx.beginPath();
    for (const seg of line.segments) {
      ctx.moveTo(seg.x1, seg.y1);
      ctx.lineTo(seg.x2, seg.y2);
    }
    ctx.stroke();
    const anchor = line.segments[Math.floor(line.segments.length / 2)]!;
    ctx.fillStyle = "#111";
    ctx.font = "11px sans-serif";
    ctx.textAlign = "center";
    ctx.textBaseline = "bottom";
    ctx.fillText(line.label, anchor.x1, anchor.y1 - 2);
  }

  ctx.strokeStyle = "#444";
  ctx.lineWidth = 1;
  ctx.strokeRect(vm.plot.x, vm.plot.y, vm.plot.w, vm.plot.h);

  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.textAlign = "center";
  ctx.textBaseline = "top";
  for (const tick of vm.xTicks) {
    ctx.fillText(tick.label, tick.px, vm.plot.y + vm.plot.h + 4);
  }
  ctx.textAlign = "right";
  ctx.textBaseline = "middle";
  for (const tick of vm.yTicks) {
    ctx.fillText(tick.label, vm.plot.x - 4, tick.px);
  }

  ctx.textAlign = "center";
  ctx.textBaseline = "top";
  ctx.fillText(vm.param1, vm.plot.x + vm.plot.w / 2, vm.plot.y + vm.plot.h + 20);
  ctx.textAlign = "left";
  ctx.textBaseline = "bottom";
  ctx.fillText(vm.param2, 4, vm.plot.y + 10);
}
