// Test support: load captured service fixtures and serve them through a
// fetch stand-in, so client and app tests replay real responses.

import { readFileSync } from "node:fs";
import { join } from "node:path";
import type { FetchLike } from "../src/api.js";

export interface Fixture {
  endpoint: string;
  request: unknown;
  status: number;
  response: unknown;
}

const FIXTURE_DIR = join(__dirname, "fixtures");

export function loadFixture(name: string): Fixture {
  const raw = readFileSync(join(FIXTURE_DIR, `${name}.json`), "utf8");
  return JSON.parse(raw) as Fixture;
}

function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** Fetch stand-in that answers each endpoint with a queued-up fixture
 * and records every request it saw. */
export class FixtureServer {
  readonly calls: Array<{ url: string; body: unknown }> = [];
  private readonly byEndpoint = new Map<string, Fixture>();

  serve(...names: string[]): this {
    for (const name of names) {
      const fixture = loadFixture(name);
      this.byEndpoint.set(fixture.endpoint, fixture);
    }
    return this;
  }

  fetch: FetchLike = (url, init) => {
    const body = init.body ? JSON.parse(init.body as string) : null;
    this.calls.push({ url, body });
    if (init.signal?.aborted) {
      return Promise.reject(abortError());
    }
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const fixture = this.byEndpoint.get(path);
    if (!fixture) {
      return Promise.resolve(jsonResponse(404, { detail: `no fixture for ${path}` }));
    }
    return Promise.resolve(jsonResponse(fixture.status, fixture.response));
  };
}

export function abortError(): Error {
  const err = new Error("The operation was aborted");
  err.name = "AbortError";
  return err;
}

/** Fetch stand-in whose promises stay pending until released; rejects
 * with AbortError when the signal fires first. */
export class GatedFetch {
  readonly pending: Array<{
    url: string;
    resolve: (r: Response) => void;
  }> = [];

  fetch: FetchLike = (url, init) => {
    return new Promise<Response>((resolve, reject) => {
      init.signal?.addEventListener("abort", () => reject(abortError()));
      this.pending.push({ url, resolve });
    });
  };

  release(index: number, status: number, payload: unknown): void {
    const entry = this.pending[index];
    if (!entry) throw new Error(`no pending request ${index}`);
    entry.resolve(
      new Response(JSON.stringify(payload), {
        status,
        headers: { "content-type": "application/json" },
      }),
    );
  }
}
