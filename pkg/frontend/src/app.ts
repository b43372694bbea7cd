// Explorer wiring: editor form, summary panel, contour canvas, preset
// loader, and comparison tray.  All numbers on screen come from service
// responses; the panel keeps the request id of every response it shows,
// and slider-speed edits are debounced with in-flight requests aborted
// on each newer state.

import { ApiClient, ApiError, RequestChannel } from "./api.js";
import { cellAt, contourViewModel, type ContourViewModel } from "./contour.js";
import { drawContour, type Context2dLike } from "./draw.js";
import { fmtCount, fmtFixed, fmtPercent } from "./format.js";
import { PRESETS, presetState } from "./presets.js";
import { encodeState, Store, type ExplorerState } from "./state.js";
import { ComparisonTray } from "./tray.js";
import type {
  DesignBody,
  DesignEffectResponse,
  GridResponse,
  IccValidateResponse,
  PowerResponse,
  SampleSizeResponse,
} from "./types.js";

export interface ExplorerOptions {
  debounceMs?: number;
  contextFor?: (canvas: HTMLCanvasElement) => Context2dLike | null;
  onStateChange?: (query: string) => void;
}

export interface Responses {
  validity: IccValidateResponse | null;
  power: PowerResponse | null;
  sampleSize: SampleSizeResponse | null;
  designEffect: DesignEffectResponse | null;
  grid: GridResponse | null;
}

/** Write one sweep-parameter value back into the editor state. */
export function setGridParam(state: ExplorerState, param: string, value: number): void {
  switch (param) {
    case "alpha0": state.design.icc.alpha0 = value; break;
    case "alpha1": state.design.icc.alpha1 = value; break;
    case "alpha2": state.design.icc.alpha2 = value; break;
    case "p0": state.design.outcome.mu_c = value; break;
    case "p1": state.design.outcome.mu_t = value; break;
    case "m": state.design.dims.m = Math.round(value); break;
    case "k": state.design.dims.k = Math.round(value); break;
    case "l": state.design.dims.l = Math.round(value); break;
    case "n": state.design.n_clusters = Math.round(value); break;
    default: throw new Error(`unknown sweep parameter ${param}`);
  }
}

interface FieldSpec {
  key: string;
  label: string;
  get: (s: ExplorerState) => number | string;
  set: (s: ExplorerState, raw: string) => void;
  kind: "number" | "int" | "text";
}

const num = (raw: string) => Number(raw);
const FIELDS: FieldSpec[] = [
  { key: "link", label: "link", kind: "text",
    get: (s) => s.design.outcome.link,
    set: (s, r) => (s.design.outcome.link = r) },
  { key: "family", label: "variance family", kind: "text",
    get: (s) => s.design.outcome.variance_family,
    set: (s, r) => (s.design.outcome.variance_family = r) },
  { key: "mu_c", label: "control mean", kind: "number",
    get: (s) => s.design.outcome.mu_c,
    set: (s, r) => (s.design.outcome.mu_c = num(r)) },
  { key: "mu_t", label: "treatment mean", kind: "number",
    get: (s) => s.design.outcome.mu_t,
    set: (s, r) => (s.design.outcome.mu_t = num(r)) },
  { key: "phi", label: "dispersion", kind: "number",
    get: (s) => s.design.outcome.phi,
    set: (s, r) => (s.design.outcome.phi = num(r)) },
  { key: "alpha0", label: "icc same provider", kind: "number",
    get: (s) => s.design.icc.alpha0,
    set: (s, r) => (s.design.icc.alpha0 = num(r)) },
  { key: "alpha1", label: "icc same facility", kind: "number",
    get: (s) => s.design.icc.alpha1,
    set: (s, r) => (s.design.icc.alpha1 = num(r)) },
  { key: "alpha2", label: "icc same cluster", kind: "number",
    get: (s) => s.design.icc.alpha2,
    set: (s, r) => (s.design.icc.alpha2 = num(r)) },
  { key: "m", label: "facilities / cluster", kind: "int",
    get: (s) => s.design.dims.m,
    set: (s, r) => (s.design.dims.m = Math.round(num(r))) },
  { key: "k", label: "providers / facility", kind: "int",
    get: (s) => s.design.dims.k,
    set: (s, r) => (s.design.dims.k = Math.round(num(r))) },
  { key: "l", label: "patients / provider", kind: "int",
    get: (s) => s.design.dims.l,
    set: (s, r) => (s.design.dims.l = Math.round(num(r))) },
  { key: "pi_c", label: "control fraction", kind: "number",
    get: (s) => s.design.pi_c,
    set: (s, r) => (s.design.pi_c = num(r)) },
  { key: "rand_level", label: "randomization level", kind: "int",
    get: (s) => s.design.rand_level,
    set: (s, r) => (s.design.rand_level = Math.round(num(r))) },
  { key: "alpha_level", label: "test level", kind: "number",
    get: (s) => s.design.alpha_level,
    set: (s, r) => (s.design.alpha_level = num(r)) },
  { key: "target_power", label: "target power", kind: "number",
    get: (s) => s.design.target_power,
    set: (s, r) => (s.design.target_power = num(r)) },
  { key: "n_clusters", label: "clusters (blank = solve)", kind: "text",
    get: (s) => (s.design.n_clusters === null ? "" : s.design.n_clusters),
    set: (s, r) => (s.design.n_clusters = r.trim() === "" ? null : Math.round(num(r))) },
];

export class Explorer {
  readonly store: Store;
  readonly tray = new ComparisonTray();
  responses: Responses = {
    validity: null, power: null, sampleSize: null, designEffect: null, grid: null,
  };
  lastViewModel: ContourViewModel | null = null;
  lastError: string | null = null;

  private readonly client: ApiClient;
  private readonly root: HTMLElement;
  private readonly options: ExplorerOptions;
  private readonly channels = {
    validity: new RequestChannel(),
    power: new RequestChannel(),
    sampleSize: new RequestChannel(),
    designEffect: new RequestChannel(),
    grid: new RequestChannel(),
  };
  private inputs = new Map<string, HTMLInputElement>();
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private refreshing: Promise<void> = Promise.resolve();

  constructor(root: HTMLElement, client: ApiClient, initial?: ExplorerState,
              options: ExplorerOptions = {}) {
    this.root = root;
    this.client = client;
    this.options = options;
    this.store = new Store(initial);
    this.buildDom();
    this.store.subscribe(() => {
      this.syncInputs();
      this.options.onStateChange?.(encodeState(this.store.get()));
      this.scheduleRefresh();
    });
  }

  private buildDom(): void {
    const doc = this.root.ownerDocument;
    this.root.classList.add("explorer");

    const presetBar = doc.createElement("div");
    presetBar.className = "presets";
    const select = doc.createElement("select");
    select.dataset.role = "preset";
    const blank = doc.createElement("option");
    blank.value = "";
    blank.textContent = "load a preset...";
    select.appendChild(blank);
    for (const preset of PRESETS) {
      const option = doc.createElement("option");
      option.value = preset.id;
      option.textContent = preset.label;
      option.title = preset.note;
      select.appendChild(option);
    }
    select.addEventListener("change", () => {
      if (select.value) void this.loadPreset(select.value);
    });
    presetBar.appendChild(select);
    const pinButton = doc.createElement("button");
    pinButton.dataset.role = "pin";
    pinButton.textContent = "pin to tray";
    pinButton.addEventListener("click", () => this.pinCurrent());
    presetBar.appendChild(pinButton);
    this.root.appendChild(presetBar);

    const form = doc.createElement("form");
    form.className = "editor";
    form.addEventListener("submit", (event) => event.preventDefault());
    for (const field of FIELDS) {
      const label = doc.createElement("label");
      label.textContent = field.label;
      const input = doc.createElement("input");
      input.name = field.key;
      input.type = "text";
      input.addEventListener("input", () => {
        const raw = input.value;
        this.store.update((state) => field.set(state, raw));
      });
      label.appendChild(input);
      form.appendChild(label);
      this.inputs.set(field.key, input);
    }
    this.root.appendChild(form);

    const summary = doc.createElement("div");
    summary.className = "summary";
    for (const key of ["status", "validity", "power-at-n", "required-n",
                       "power-at-required-n", "design-effect", "spectrum",
                       "request-ids"]) {
      const row = doc.createElement("div");
      row.dataset.field = key;
      summary.appendChild(row);
    }
    this.root.appendChild(summary);

    const canvas = doc.createElement("canvas");
    canvas.dataset.role = "contour";
    canvas.width = 520;
    canvas.height = 420;
    canvas.addEventListener("click", (event) => {
      this.pinPointFromPixel(event.offsetX, event.offsetY);
    });
    this.root.appendChild(canvas);

    const tray = doc.createElement("div");
    tray.className = "tray";
    tray.dataset.role = "tray";
    this.root.appendChild(tray);

    this.syncInputs();
  }

  private syncInputs(): void {
    const state = this.store.get();
    for (const field of FIELDS) {
      const input = this.inputs.get(field.key);
      if (!input) continue;
      const value = String(field.get(state));
      if (input.value !== value) input.value = value;
    }
  }

  private scheduleRefresh(): void {
    const delay = this.options.debounceMs ?? 150;
    if (this.debounceTimer !== null) clearTimeout(this.debounceTimer);
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.refresh();
    }, delay);
  }

  /** Re-query every endpoint for the current state; resolves when all
   * requests have settled and the panel is repainted. */
  refresh(): Promise<void> {
    const state = this.store.get();
    const design: DesignBody = structuredClone(state.design);
    const run = (async () => {
      const validity = this.channels.validity.run((signal) =>
        this.client.validateIcc({ icc: design.icc, dims: design.dims }, signal));
      const power = design.n_clusters === null
        ? Promise.resolve(null)
        : this.channels.power.run((signal) => this.client.power(design, signal));
      const sampleSize = this.channels.sampleSize.run((signal) =>
        this.client.sampleSize({ ...structuredClone(design), n_clusters: null,
                                 real_valued: false }, signal));
      const designEffect = this.channels.designEffect.run((signal) =>
        this.client.designEffect({ ...structuredClone(design),
                                   unclustered_n: null }, signal));
      // The sweep needs a concrete cluster count at every node; in solve
      // mode wait for the service's required N and sweep at that design.
      const grid = (async () => {
        let gridN = design.n_clusters;
        if (gridN === null) {
          const solved = await sampleSize.catch(() => null);
          gridN = solved?.n_clusters ?? null;
        }
        return this.channels.grid.run((signal) =>
          this.client.sensitivityGrid({
            base: { ...structuredClone(design), n_clusters: gridN },
            axis1: state.axis1, axis2: state.axis2,
          }, signal));
      })();

      const [v, p, n, d, g] = await Promise.allSettled(
        [validity, power, sampleSize, designEffect, grid]);

      this.lastError = null;
      // A fulfilled null means the request was superseded (a newer
      // refresh will repaint) or skipped on purpose; only the skipped
      // case should clear what is on screen.
      const apply = <K extends keyof Responses>(
        key: K,
        result: PromiseSettledResult<Responses[K] | null>,
        clearOnNull = false,
      ): void => {
        if (result.status === "rejected") {
          const reason = result.reason;
          this.lastError = reason instanceof ApiError
            ? reason.message : String(reason);
          this.responses[key] = null;
        } else if (result.value !== null) {
          this.responses[key] = result.value;
        } else if (clearOnNull) {
          this.responses[key] = null;
        }
      };
      apply("validity", v);
      apply("power", p, design.n_clusters === null);
      apply("sampleSize", n);
      apply("designEffect", d);
      apply("grid", g);

      this.render();
    })();
    this.refreshing = run;
    return run;
  }

  whenIdle(): Promise<void> {
    return this.refreshing;
  }

  async loadPreset(id: string): Promise<void> {
    this.store.replace(presetState(id));
    // replace() scheduled a debounced refresh; collapse it into this
    // immediate one so callers can await the repaint
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
      this.debounceTimer = null;
    }
    await this.refresh();
  }

  pinCurrent(): void {
    const state = this.store.get();
    const label = `pin ${this.tray.list().length + 1}`;
    this.tray.pin({
      label,
      state,
      power: this.responses.power,
      sampleSize: this.responses.sampleSize,
      designEffect: this.responses.designEffect,
      validity: this.responses.validity,
    });
    this.renderTray();
  }

  pinPointFromPixel(px: number, py: number): void {
    const grid = this.responses.grid;
    const vm = this.lastViewModel;
    if (!grid || !vm) return;
    const hit = cellAt(vm, grid, px, py);
    if (!hit) return;
    this.store.update((state) => {
      setGridParam(state, grid.param1, hit.value1);
      setGridParam(state, grid.param2, hit.value2);
    });
  }

  private field(key: string): HTMLElement {
    const el = this.root.querySelector<HTMLElement>(`[data-field="${key}"]`);
    if (!el) throw new Error(`missing panel field ${key}`);
    return el;
  }

  private render(): void {
    const { validity, power, sampleSize, designEffect, grid } = this.responses;
    const ids: string[] = [];

    this.field("status").textContent = this.lastError ?? "";

    if (validity) {
      ids.push(validity.request_id);
      const s = validity.spectrum;
      this.field("validity").textContent = validity.valid
        ? "correlation structure: valid"
        : `correlation structure: invalid (${validity.violations.join("; ")})`;
      this.field("spectrum").textContent =
        `eigenvalues ${fmtFixed(s.lambda1)} (x${s.mult1}), ` +
        `${fmtFixed(s.lambda2)} (x${s.mult2}), ` +
        `${fmtFixed(s.lambda3)} (x${s.mult3}), ` +
        `${fmtFixed(s.lambda4)} (x${s.mult4})`;
    }

    this.field("power-at-n").textContent = power
      ? `power at ${power.spec.n_clusters} clusters: ${fmtPercent(power.power)}`
      : "";
    if (power) ids.push(power.request_id);

    if (sampleSize) {
      ids.push(sampleSize.request_id);
      this.field("required-n").textContent =
        `required clusters: ${fmtCount(sampleSize.n_clusters)}`;
      this.field("power-at-required-n").textContent =
        `power there: ${fmtPercent(sampleSize.power)}`;
    }

    if (designEffect) {
      ids.push(designEffect.request_id);
      this.field("design-effect").textContent =
        `design effect: ${fmtFixed(designEffect.design_effect)}`;
    }

    if (grid) {
      ids.push(grid.request_id);
      this.renderContour(grid);
    }

    this.field("request-ids").textContent = ids.join(" ");
  }

  private renderContour(grid: GridResponse): void {
    const canvas = this.root.querySelector<HTMLCanvasElement>(
      '[data-role="contour"]');
    if (!canvas) return;
    const vm = contourViewModel(grid, {
      width: canvas.width, height: canvas.height,
    });
    this.lastViewModel = vm;
    const ctx = this.options.contextFor
      ? this.options.contextFor(canvas)
      : (canvas.getContext("2d") as Context2dLike | null);
    if (ctx) drawContour(ctx, vm);
  }

  private renderTray(): void {
    const tray = this.root.querySelector<HTMLElement>('[data-role="tray"]');
    if (!tray) return;
    tray.textContent = "";
    const doc = this.root.ownerDocument;
    for (const entry of this.tray.list()) {
      const card = doc.createElement("div");
      card.className = "tray-card";
      const lines = [entry.label];
      if (entry.sampleSize) {
        lines.push(`N ${fmtCount(entry.sampleSize.n_clusters)}`);
        lines.push(`power ${fmtPercent(entry.sampleSize.power)}`);
      } else if (entry.power) {
        lines.push(`power ${fmtPercent(entry.power.power)}`);
      }
      if (entry.designEffect) {
        lines.push(`DE ${fmtFixed(entry.designEffect.design_effect)}`);
      }
      if (entry.validity) {
        lines.push(`lambda4 ${fmtFixed(entry.validity.spectrum.lambda4)}`);
      }
      card.textContent = lines.join(" | ");
      tray.appendChild(card);
    }
  }
}

export function createExplorer(
  root: HTMLElement,
  client: ApiClient,
  initial?: ExplorerState,
  options: ExplorerOptions = {},
): Explorer {
  return new Explorer(root, client, initial, options);
}
