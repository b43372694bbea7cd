// Contour view model: turns a sensitivity-grid response into plain
// drawing data (colored cells, masked cells, labeled isolines, axis
// ticks) plus the inverse pixel-to-cell mapping for click-to-pin.
// Every cell value is taken verbatim from the response; the only
// client-side arithmetic is pixel placement and the linear
// interpolation that positions isoline crossings between known values.

import type { GridResponse } from "./types.js";

export interface ContourOptions {
  width: number;
  height: number;
  margin: number;
  levels: number[];
}

export const DEFAULT_OPTIONS: ContourOptions = {
  width: 520,
  height: 420,
  margin: 44,
  levels: [0.5, 0.6, 0.7, 0.8, 0.9, 0.95],
};

export interface Cell {
  i: number; // index into values1 (x axis)
  j: number; // index into values2 (y axis)
  x: number;
  y: number;
  w: number;
  h: number;
  value: number | null;
  masked: boolean;
  color: string;
}

export interface IsolineSegment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface Isoline {
  level: number;
  label: string;
  segments: IsolineSegment[];
}

export interface AxisTick {
  value: number;
  px: number;
  label: string;
}

export interface ContourViewModel {
  width: number;
  height: number;
  plot: { x: number; y: number; w: number; h: number };
  param1: string;
  param2: string;
  cells: Cell[];
  isolines: Isoline[];
  xTicks: AxisTick[];
  yTicks: AxisTick[];
}

const MASK_COLOR = "#d8d8d8";

/** Blue-to-warm ramp over [0, 1]; masked cells never reach here. */
export function powerColor(value: number): string {
  const t = Math.min(1, Math.max(0, value));
  const r = Math.round(40 + 215 * t);
  const g = Math.round(60 + 120 * t);
  const b = Math.round(160 - 110 * t);
  return `rgb(${r},${g},${b})`;
}

function tickStep(span: number): number {
  if (span <= 0) return 1;
  const raw = span / 5;
  const magnitude = 10 ** Math.floor(Math.log10(raw));
  for (const mult of [1, 2, 5, 10]) {
    if (raw <= mult * magnitude) return mult * magnitude;
  }
  return 10 * magnitude;
}

function formatTick(value: number): string {
  return Number(value.toPrecision(3)).toString();
}

export function contourViewModel(
  grid: GridResponse,
  options: Partial<ContourOptions> = {},
): ContourViewModel {
  const opts = { ...DEFAULT_OPTIONS, ...options };
  const { values1, values2 } = grid;
  const n1 = values1.length;
  const n2 = values2.length;
  const plot = {
    x: opts.margin,
    y: opts.margin / 2,
    w: opts.width - 1.5 * opts.margin,
    h: opts.height - 1.5 * opts.margin,
  };
  const cellW = plot.w / n1;
  const cellH = plot.h / n2;

  // axis1 runs left to right, axis2 bottom to top
  const cells: Cell[] = [];
  for (let i = 0; i < n1; i++) {
    for (let j = 0; j < n2; j++) {
      const value = grid.power[i]?.[j] ?? null;
      const masked = !(grid.valid[i]?.[j] ?? false);
      cells.push({
        i,
        j,
        x: plot.x + i * cellW,
        y: plot.y + plot.h - (j + 1) * cellH,
        w: cellW,
        h: cellH,
        value,
        masked,
        color: masked || value === null ? MASK_COLOR : powerColor(value),
      });
    }
  }

  const centerX = (i: number) => plot.x + (i + 0.5) * cellW;
  const centerY = (j: number) => plot.y + plot.h - (j + 0.5) * cellH;
  const isolines = opts.levels.map((level) => ({
    level,
    label: `${Math.round(level * 100)}%`,
    segments: marchingSquares(grid, level, centerX, centerY),
  }));

  const xTicks: AxisTick[] = [];
  if (n1 > 0) {
    const lo = values1[0]!;
    const hi = values1[n1 - 1]!;
    const step = tickStep(hi - lo);
    for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12; v += step) {
      const frac = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      xTicks.push({ value: v, px: plot.x + frac * plot.w, label: formatTick(v) });
    }
  }
  const yTicks: AxisTick[] = [];
  if (n2 > 0) {
    const lo = values2[0]!;
    const hi = values2[n2 - 1]!;
    const step = tickStep(hi - lo);
    for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12; v += step) {
      const frac = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      yTicks.push({ value: v, px: plot.y + plot.h - frac * plot.h, label: formatTick(v) });
    }
  }

  return {
    width: opts.width,
    height: opts.height,
    plot,
    param1: grid.param1,
    param2: grid.param2,
    cells,
    isolines,
    xTicks,
    yTicks,
  };
}

/** Standard marching squares over cell centers; squares touching a
 * masked cell are skipped so isolines stop at the invalid region
 * instead of extrapolating into it. */
function marchingSquares(
  grid: GridResponse,
  level: number,
  centerX: (i: number) => number,
  centerY: (j: number) => number,
): IsolineSegment[] {
  const segments: IsolineSegment[] = [];
  const n1 = grid.values1.length;
  const n2 = grid.values2.length;

  const valueAt = (i: number, j: number): number | null => {
    if (!(grid.valid[i]?.[j] ?? false)) return null;
    const v = grid.power[i]?.[j];
    return typeof v === "number" ? v : null;
  };

  for (let i = 0; i < n1 - 1; i++) {
    for (let j = 0; j < n2 - 1; j++) {
      const corners = [
        { x: centerX(i), y: centerY(j), v: valueAt(i, j) },
        { x: centerX(i + 1), y: centerY(j), v: valueAt(i + 1, j) },
        { x: centerX(i + 1), y: centerY(j + 1), v: valueAt(i + 1, j + 1) },
        { x: centerX(i), y: centerY(j + 1), v: valueAt(i, j + 1) },
      ];
      if (corners.some((c) => c.v === null)) continue;

      const crossings: Array<{ x: number; y: number }> = [];
      for (let e = 0; e < 4; e++) {
        const a = corners[e]!;
        const b = corners[(e + 1) % 4]!;
        const va = a.v as number;
        const vb = b.v as number;
        if ((va < level) === (vb < level)) continue;
        const t = (level - va) / (vb - va);
        crossings.push({ x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y) });
      }
      // 2 crossings in the generic case; the rare saddle (4) is split
      // into two arbitrary pairs, which is visually indistinguishable
      for (let c = 0; c + 1 < crossings.length; c += 2) {
        segments.push({
          x1: crossings[c]!.x,
          y1: crossings[c]!.y,
          x2: crossings[c + 1]!.x,
          y2: crossings[c + 1]!.y,
        });
      }
    }
  }
  return segments;
}

/** Map a pixel inside the plot area back to its cell; null outside. */
export function cellAt(
  vm: ContourViewModel,
  grid: GridResponse,
  px: number,
  py: number,
): { i: number; j: number; value1: number; value2: number } | null {
  const { plot } = vm;
  if (px < plot.x || px > plot.x + plot.w || py < plot.y || py > plot.y + plot.h) {
    return null;
  }
  const n1 = grid.values1.length;
  const n2 = grid.values2.length;
  const i = Math.min(n1 - 1, Math.floor(((px - plot.x) / plot.w) * n1));
  const j = Math.min(n2 - 1, Math.floor(((plot.y + plot.h - py) / plot.h) * n2));
  return { i, j, value1: grid.values1[i]!, value2: grid.values2[j]! };
}
