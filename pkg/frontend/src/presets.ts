// Shipped example designs.  The first two are the worked trial
// examples the engine's anchors are frozen against (therapy education:
// 22 clusters at 82.65% power; literacy program: 36 clusters at
// 80.87%); the rest are reference-table rows and the degenerate
// no-clustering case.

import type { ExplorerState } from "./state.js";
import { defaultState } from "./state.js";

export interface Preset {
  id: string;
  label: string;
  note: string;
  state: ExplorerState;
}

function binomialDesign(
  dims: [number, number, number],
  icc: [number, number, number],
  mu: [number, number],
  overrides: Partial<ExplorerState["design"]> = {},
): ExplorerState {
  const state = defaultState();
  state.design.dims = { m: dims[0], k: dims[1], l: dims[2] };
  state.design.icc = { alpha0: icc[0], alpha1: icc[1], alpha2: icc[2] };
  state.design.outcome.mu_c = mu[0];
  state.design.outcome.mu_t = mu[1];
  Object.assign(state.design, overrides);
  return state;
}

export const PRESETS: Preset[] = [
  {
    id: "therapy-education",
    label: "Therapy education trial",
    note: "3 facilities x 3 providers x 36 patients, logit link",
    state: binomialDesign([3, 3, 36], [0.05, 0.04, 0.03], [0.785, 0.88]),
  },
  {
    id: "literacy",
    label: "Literacy program trial",
    note: "continuous score, identity link; drop the randomization level to see the cluster count shrink",
    state: (() => {
      const state = binomialDesign([4, 25, 2], [0.445, 0.104, 0.008], [0.0, 0.19]);
      state.design.outcome.link = "identity";
      state.design.outcome.variance_family = "gaussian";
      // the score scale makes the two correlations worth sweeping much
      // narrower than the binary defaults
      state.axis1 = { param: "alpha1", lo: 0.05, hi: 0.2, steps: 41 };
      state.axis2 = { param: "alpha2", lo: 0.0, hi: 0.05, steps: 41 };
      return state;
    })(),
  },
  {
    id: "reference-row-1",
    label: "Reference grid row 1",
    note: "P 0.2 to 0.5, strong clustering, 14 clusters",
    state: binomialDesign([2, 3, 5], [0.4, 0.1, 0.03], [0.2, 0.5], {
      n_clusters: 14,
    }),
  },
  {
    id: "reference-row-5",
    label: "Reference grid row 5",
    note: "P 0.2 to 0.5, moderate clustering, 10 clusters",
    state: binomialDesign([2, 3, 5], [0.15, 0.08, 0.02], [0.2, 0.5], {
      n_clusters: 10,
    }),
  },
  {
    id: "no-clustering",
    label: "No clustering",
    note: "all correlations zero; design effect must show 1",
    state: binomialDesign([2, 3, 5], [0, 0, 0], [0.2, 0.5]),
  },
];

export function findPreset(id: string): Preset | undefined {
  return PRESETS.find((preset) => preset.id === id);
}

/** Deep copy for loading into the editor, so edits after loading a
 * preset never leak back into the shipped definition. */
export function presetState(id: string): ExplorerState {
  const preset = findPreset(id);
  if (!preset) throw new Error(`unknown preset ${id}`);
  return structuredClone(preset.state);
}
