// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { createExplorer, type Explorer } from "../src/app.js";
import type { Context2dLike } from "../src/draw.js";
import { defaultState, type ExplorerState } from "../src/state.js";
import type { GridResponse } from "../src/types.js";
import { FixtureServer, loadFixture } from "./helpers.js";

class CellRecorder implements Context2dLike {
  fillStyle: Context2dLike["fillStyle"] = "";
  strokeStyle: Context2dLike["strokeStyle"] = "";
  lineWidth = 1;
  font = "";
  textAlign: CanvasTextAlign = "left";
  textBaseline: CanvasTextBaseline = "alphabetic";
  rects: Array<{ color: string }> = [];

  clearRect(): void {
    this.rects = [];
  }
  fillRect(): void {
    this.rects.push({ color: String(this.fillStyle) });
  }
  strokeRect(): void {}
  beginPath(): void {}
  moveTo(): void {}
  lineTo(): void {}
  stroke(): void {}
  fillText(): void {}
}

const THERAPY_FIXTURES = [
  "power.therapy", "samplesize.therapy", "designeffect.therapy",
  "icc.valid", "grid.therapy",
];

function mount(server: FixtureServer, initial?: ExplorerState): {
  explorer: Explorer; ctx: CellRecorder; root: HTMLElement;
} {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const ctx = new CellRecorder();
  const explorer = createExplorer(root, new ApiClient("", server.fetch),
                                  initial, {
    debounceMs: 0,
    contextFor: () => ctx,
  });
  return { explorer, ctx, root };
}

function fieldText(root: HTMLElement, key: string): string {
  return root.querySelector(`[data-field="${key}"]`)?.textContent ?? "";
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("explorer panel", () => {
  it("renders the therapy-education preset as 22 clusters at 82.65%", async () => {
    const server = new FixtureServer().serve(...THERAPY_FIXTURES);
    const { explorer, root } = mount(server);
    await explorer.loadPreset("therapy-education");

    expect(fieldText(root, "required-n")).toBe("required clusters: 22");
    expect(fieldText(root, "power-at-required-n")).toBe("power there: 82.65%");
    expect(fieldText(root, "design-effect")).toContain("12.11");
    expect(fieldText(root, "validity")).toBe("correlation structure: valid");
    expect(fieldText(root, "status")).toBe("");
    // every displayed figure is traceable to a response id
    const ids = fieldText(root, "request-ids").split(/\s+/).filter(Boolean);
    expect(ids.length).toBeGreaterThanOrEqual(3);
    for (const id of ids) expect(id).toMatch(/^[0-9a-f]{16}$/);
    // in solve mode the sweep runs at the solved cluster count
    const gridCall = server.calls.find((c) => c.url.endsWith("/v1/sensitivity-grid"));
    expect((gridCall?.body as { base: { n_clusters: number | null } }).base.n_clusters).toBe(22);
  });

  it("renders the literacy preset as 36 clusters at 80.87%", async () => {
    const server = new FixtureServer().serve(
      "samplesize.literacy", "designeffect.therapy", "icc.valid",
      "grid.therapy");
    const { explorer, root } = mount(server);
    await explorer.loadPreset("literacy");

    expect(fieldText(root, "required-n")).toBe("required clusters: 36");
    expect(fieldText(root, "power-at-required-n")).toBe("power there: 80.87%");
  });

  it("shows design effect 1 for the no-clustering preset", async () => {
    const server = new FixtureServer().serve(
      "samplesize.therapy", "designeffect.zeroicc", "icc.valid",
      "grid.therapy");
    const { explorer, root } = mount(server);
    await explorer.loadPreset("no-clustering");

    expect(fieldText(root, "design-effect")).toBe("design effect: 1.0000");
  });
});

describe("explorer contour", () => {
  it("paints exactly the grid the service returned, masking invalid cells", async () => {
    const server = new FixtureServer().serve(...THERAPY_FIXTURES);
    const grid = loadFixture("grid.therapy").response as GridResponse;
    const { explorer, ctx, root } = mount(server);
    await explorer.loadPreset("therapy-education");

    const vm = explorer.lastViewModel!;
    expect(vm).not.toBeNull();
    const n1 = grid.values1.length;
    const n2 = grid.values2.length;
    expect(vm.cells.length).toBe(n1 * n2);
    // displayed values are the response values, cell for cell
    for (const cell of vm.cells) {
      expect(cell.value).toBe(grid.power[cell.i]![cell.j]!);
      expect(cell.masked).toBe(!grid.valid[cell.i]![cell.j]!);
    }
    // the painted rects follow the same colors in the same order
    expect(ctx.rects.length).toBe(vm.cells.length);
    for (let idx = 0; idx < vm.cells.length; idx++) {
      expect(ctx.rects[idx]!.color).toBe(vm.cells[idx]!.color);
    }
    expect(vm.cells.some((cell) => cell.masked)).toBe(true);
    // invalid regions render as masked cells, not as an error
    expect(fieldText(root, "status")).toBe("");
  });

  it("writes the clicked cell's parameter pair back into the editor", async () => {
    const server = new FixtureServer().serve(...THERAPY_FIXTURES);
    const grid = loadFixture("grid.therapy").response as GridResponse;
    const { explorer } = mount(server);
    await explorer.loadPreset("therapy-education");

    const vm = explorer.lastViewModel!;
    const cell = vm.cells.find((c) => c.i === 28 && c.j === 32)!;
    explorer.pinPointFromPixel(cell.x + cell.w / 2, cell.y + cell.h / 2);

    const state = explorer.store.get();
    expect(state.design.icc.alpha1).toBe(grid.values1[28]!);
    expect(state.design.icc.alpha2).toBe(grid.values2[32]!);
    // drain the refresh the write-back scheduled before the test ends
    await new Promise((resolve) => setTimeout(resolve, 1));
    await explorer.whenIdle();
  });
});

describe("explorer failure handling", () => {
  it("surfaces a domain violation without losing the panel", async () => {
    const server = new FixtureServer().serve(
      "error.domain", "samplesize.therapy", "designeffect.therapy",
      "icc.invalid", "grid.therapy");
    const initial = defaultState();
    initial.design.n_clusters = 22;
    initial.design.icc = { alpha0: 0.01, alpha1: 0.0, alpha2: 0.3 };
    const { explorer, root } = mount(server, initial);
    await explorer.refresh();

    expect(fieldText(root, "status")).toMatch(/lambda3/);
    expect(fieldText(root, "validity")).toContain("invalid");
  });
});

describe("comparison tray", () => {
  it("keeps at most four pins and drops the oldest", async () => {
    const server = new FixtureServer().serve(...THERAPY_FIXTURES);
    const { explorer, root } = mount(server);
    await explorer.loadPreset("therapy-education");

    for (let i = 0; i < 5; i++) explorer.pinCurrent();
    const cards = root.querySelectorAll(".tray-card");
    expect(cards.length).toBe(4);
    expect(cards[0]?.textContent).toContain("pin 2");
    expect(cards[3]?.textContent).toContain("pin 5");
    expect(cards[0]?.textContent).toContain("N 22");
    expect(cards[0]?.textContent).toContain("power 82.65%");
  });
});
