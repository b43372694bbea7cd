// Display formatting.  Values arrive as raw floats from the service;
// these helpers only round for presentation.

export function fmtPercent(value: number, decimals = 2): string {
  return `${(value * 100).toFixed(decimals)}%`;
}

export function fmtFixed(value: number, decimals = 4): string {
  return value.toFixed(decimals);
}

export function fmtCount(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(1);
}
