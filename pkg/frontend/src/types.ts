// Request and response shapes of the design service /v1 endpoints.
// These mirror the server-side models field for field; the explorer
// never invents values of its own, so every number on screen comes out
// of one of the response types below.

export interface Dims {
  m: number;
  k: number;
  l: number;
}

export interface Icc {
  alpha0: number;
  alpha1: number;
  alpha2: number;
}

export interface Outcome {
  link: string;
  variance_family: string;
  mu_c: number;
  mu_t: number;
  phi: number;
  kappa_c: number | null;
  kappa_t: number | null;
}

export interface DesignBody {
  dims: Dims;
  icc: Icc;
  outcome: Outcome;
  n_clusters: number | null;
  pi_c: number;
  rand_level: number;
  alpha_level: number;
  target_power: number;
}

export interface SampleSizeBody extends DesignBody {
  real_valued: boolean;
}

export interface DesignEffectBody extends DesignBody {
  unclustered_n: number | null;
}

export interface AxisBody {
  param: string;
  lo: number;
  hi: number;
  steps: number;
}

export interface GridBody {
  base: DesignBody;
  axis1: AxisBody;
  axis2: AxisBody;
}

export interface IccValidateBody {
  icc: Icc;
  dims: Dims;
}

export interface PowerResponse {
  request_id: string;
  spec: DesignBody;
  power: number;
}

export interface SampleSizeResponse {
  request_id: string;
  spec: SampleSizeBody;
  n_clusters: number;
  power: number;
}

export interface DesignEffectResponse {
  request_id: string;
  spec: DesignEffectBody;
  design_effect: number;
  route: { clustered_patients: number; n_clusters: number } | null;
}

export interface AllocationResponse {
  request_id: string;
  outcome: Outcome;
  pi_c: number;
}

export interface Spectrum {
  lambda1: number;
  mult1: number;
  lambda2: number;
  mult2: number;
  lambda3: number;
  mult3: number;
  lambda4: number;
  mult4: number;
}

export interface IccValidateResponse {
  request_id: string;
  valid: boolean;
  spectrum: Spectrum;
  violations: string[];
  repeated: string[][];
}

export interface GridResponse {
  request_id: string;
  param1: string;
  values1: number[];
  param2: string;
  values2: number[];
  // power[i][j] is null exactly where valid[i][j] is false
  power: (number | null)[][];
  valid: boolean[][];
}

export interface ErrorDetail {
  field: string;
  message: string;
}
