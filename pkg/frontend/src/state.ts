// Explorer state: the editable design mirror plus the contour axes,
// with a URL query encoding so any explorer view is deep-linkable.
// Responses are kept alongside but never serialized; reloading a link
// re-fetches them from the service.

import type { AxisBody, DesignBody } from "./types.js";

export interface ExplorerState {
  design: DesignBody;
  axis1: AxisBody;
  axis2: AxisBody;
}

export const DEFAULT_GRID_STEPS = 41;

export function defaultState(): ExplorerState {
  return {
    design: {
      dims: { m: 2, k: 3, l: 5 },
      icc: { alpha0: 0.1, alpha1: 0.05, alpha2: 0.02 },
      outcome: {
        link: "logit",
        variance_family: "binomial",
        mu_c: 0.2,
        mu_t: 0.5,
        phi: 1.0,
        kappa_c: null,
        kappa_t: null,
      },
      n_clusters: null,
      pi_c: 0.5,
      rand_level: 4,
      alpha_level: 0.05,
      target_power: 0.8,
    },
    axis1: { param: "alpha1", lo: 0, hi: 0.1, steps: DEFAULT_GRID_STEPS },
    axis2: { param: "alpha2", lo: 0, hi: 0.05, steps: DEFAULT_GRID_STEPS },
  };
}

// query key -> path into the state; numbers round-trip through Number()
const NUMERIC_KEYS: Array<[string, (s: ExplorerState) => unknown, (s: ExplorerState, v: number) => void]> = [
  ["m", (s) => s.design.dims.m, (s, v) => (s.design.dims.m = v)],
  ["k", (s) => s.design.dims.k, (s, v) => (s.design.dims.k = v)],
  ["l", (s) => s.design.dims.l, (s, v) => (s.design.dims.l = v)],
  ["a0", (s) => s.design.icc.alpha0, (s, v) => (s.design.icc.alpha0 = v)],
  ["a1", (s) => s.design.icc.alpha1, (s, v) => (s.design.icc.alpha1 = v)],
  ["a2", (s) => s.design.icc.alpha2, (s, v) => (s.design.icc.alpha2 = v)],
  ["mu_c", (s) => s.design.outcome.mu_c, (s, v) => (s.design.outcome.mu_c = v)],
  ["mu_t", (s) => s.design.outcome.mu_t, (s, v) => (s.design.outcome.mu_t = v)],
  ["phi", (s) => s.design.outcome.phi, (s, v) => (s.design.outcome.phi = v)],
  ["pi_c", (s) => s.design.pi_c, (s, v) => (s.design.pi_c = v)],
  ["r", (s) => s.design.rand_level, (s, v) => (s.design.rand_level = v)],
  ["alpha", (s) => s.design.alpha_level, (s, v) => (s.design.alpha_level = v)],
  ["target", (s) => s.design.target_power, (s, v) => (s.design.target_power = v)],
  ["ax1lo", (s) => s.axis1.lo, (s, v) => (s.axis1.lo = v)],
  ["ax1hi", (s) => s.axis1.hi, (s, v) => (s.axis1.hi = v)],
  ["ax1n", (s) => s.axis1.steps, (s, v) => (s.axis1.steps = v)],
  ["ax2lo", (s) => s.axis2.lo, (s, v) => (s.axis2.lo = v)],
  ["ax2hi", (s) => s.axis2.hi, (s, v) => (s.axis2.hi = v)],
  ["ax2n", (s) => s.axis2.steps, (s, v) => (s.axis2.steps = v)],
];

export function encodeState(state: ExplorerState): string {
  const query = new URLSearchParams();
  for (const [key, get] of NUMERIC_KEYS) {
    query.set(key, String(get(state)));
  }
  query.set("link", state.design.outcome.link);
  query.set("family", state.design.outcome.variance_family);
  if (state.design.outcome.kappa_c !== null) {
    query.set("kc", String(state.design.outcome.kappa_c));
  }
  if (state.design.outcome.kappa_t !== null) {
    query.set("kt", String(state.design.outcome.kappa_t));
  }
  if (state.design.n_clusters !== null) {
    query.set("n", String(state.design.n_clusters));
  }
  query.set("ax1", state.axis1.param);
  query.set("ax2", state.axis2.param);
  return query.toString();
}

export function decodeState(query: string): ExplorerState {
  const params = new URLSearchParams(query);
  const state = defaultState();
  for (const [key, , set] of NUMERIC_KEYS) {
    const raw = params.get(key);
    if (raw === null) continue;
    const value = Number(raw);
    if (Number.isFinite(value)) set(state, value);
  }
  state.design.outcome.link = params.get("link") ?? state.design.outcome.link;
  state.design.outcome.variance_family =
    params.get("family") ?? state.design.outcome.variance_family;
  const kc = params.get("kc");
  const kt = params.get("kt");
  if (kc !== null && Number.isFinite(Number(kc))) state.design.outcome.kappa_c = Number(kc);
  if (kt !== null && Number.isFinite(Number(kt))) state.design.outcome.kappa_t = Number(kt);
  const n = params.get("n");
  if (n !== null && Number.isFinite(Number(n))) state.design.n_clusters = Number(n);
  state.axis1.param = params.get("ax1") ?? state.axis1.param;
  state.axis2.param = params.get("ax2") ?? state.axis2.param;
  return state;
}

export type Listener = (state: ExplorerState) => void;

/** Minimal observable store; update() clones nothing, callers pass a
 * mutator and every listener sees the same state object afterwards. */
export class Store {
  private state: ExplorerState;
  private listeners: Listener[] = [];

  constructor(initial?: ExplorerState) {
    this.state = initial ?? defaultState();
  }

  get(): ExplorerState {
    return this.state;
  }

  update(mutate: (state: ExplorerState) => void): void {
    mutate(this.state);
    for (const listener of this.listeners) listener(this.state);
  }

  replace(state: ExplorerState): void {
    this.state = state;
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}
