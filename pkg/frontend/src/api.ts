// Typed client for the design service.  Every call posts JSON and
// resolves to the parsed response body; non-2xx statuses reject with an
// ApiError carrying the status and the server's error payload, so the
// UI can distinguish malformed state (400) from statistically invalid
// designs (422).

import type {
  AllocationResponse,
  DesignBody,
  DesignEffectBody,
  DesignEffectResponse,
  GridBody,
  GridResponse,
  IccValidateBody,
  IccValidateResponse,
  PowerResponse,
  SampleSizeBody,
  SampleSizeResponse,
} from "./types.js";

export type FetchLike = (
  url: string,
  init: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly payload: unknown;

  constructor(status: number, payload: unknown) {
    super(ApiError.describe(status, payload));
    this.name = "ApiError";
    this.status = status;
    this.payload = payload;
  }

  static describe(status: number, payload: unknown): string {
    if (payload && typeof payload === "object") {
      const record = payload as Record<string, unknown>;
      if (typeof record.error === "string") return record.error;
      if (Array.isArray(record.detail)) {
        return record.detail
          .map((d) => {
            const item = d as Record<string, unknown>;
            return item.field ? `${item.field}: ${item.message}` : String(item.message ?? d);
          })
          .join("; ");
      }
      if (typeof record.detail === "string") return record.detail;
    }
    return `HTTP ${status}`;
  }
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    const payload = await response.json();
    if (!response.ok) throw new ApiError(response.status, payload);
    return payload as T;
  }

  power(body: DesignBody, signal?: AbortSignal): Promise<PowerResponse> {
    return this.post("/v1/power", body, signal);
  }

  sampleSize(body: SampleSizeBody, signal?: AbortSignal): Promise<SampleSizeResponse> {
    return this.post("/v1/sample-size", body, signal);
  }

  designEffect(body: DesignEffectBody, signal?: AbortSignal): Promise<DesignEffectResponse> {
    return this.post("/v1/design-effect", body, signal);
  }

  allocation(body: DesignBody["outcome"], signal?: AbortSignal): Promise<AllocationResponse> {
    return this.post("/v1/allocation", body, signal);
  }

  validateIcc(body: IccValidateBody, signal?: AbortSignal): Promise<IccValidateResponse> {
    return this.post("/v1/icc/validate", body, signal);
  }

  sensitivityGrid(body: GridBody, signal?: AbortSignal): Promise<GridResponse> {
    return this.post("/v1/sensitivity-grid", body, signal);
  }
}

/** Latest-wins request slot: issuing a new request aborts the one in
 * flight, so stale responses can never overwrite fresh state while the
 * user drags a slider. */
export class RequestChannel {
  private controller: AbortController | null = null;

  async run<T>(task: (signal: AbortSignal) => Promise<T>): Promise<T | null> {
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    try {
      return await task(controller.signal);
    } catch (err) {
      if (controller.signal.aborted) return null; // superseded, not an error
      throw err;
    } finally {
      if (this.controller === controller) this.controller = null;
    }
  }

  cancel(): void {
    this.controller?.abort();
    this.controller = null;
  }
}
