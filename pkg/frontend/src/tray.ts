// Comparison tray: up to four pinned designs shown side by side, each
// carrying the service responses it was pinned with so the comparison
// stays frozen while the editor moves on.

import type { ExplorerState } from "./state.js";
import type {
  DesignEffectResponse,
  IccValidateResponse,
  PowerResponse,
  SampleSizeResponse,
} from "./types.js";

export const TRAY_CAPACITY = 4;

export interface TrayEntry {
  label: string;
  state: ExplorerState;
  power: PowerResponse | null;
  sampleSize: SampleSizeResponse | null;
  designEffect: DesignEffectResponse | null;
  validity: IccValidateResponse | null;
}

export class ComparisonTray {
  private entries: TrayEntry[] = [];

  list(): readonly TrayEntry[] {
    return this.entries;
  }

  /** Pin a snapshot; when full, the oldest pin makes room. */
  pin(entry: TrayEntry): void {
    if (this.entries.length >= TRAY_CAPACITY) this.entries.shift();
    this.entries.push({ ...entry, state: structuredClone(entry.state) });
  }

  remove(index: number): void {
    this.entries.splice(index, 1);
  }

  clear(): void {
    this.entries = [];
  }
}
