import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, RequestChannel } from "../src/api.js";
import type { DesignBody } from "../src/types.js";
import { FixtureServer, GatedFetch, loadFixture } from "./helpers.js";

function clientFor(server: FixtureServer): ApiClient {
  return new ApiClient("http://svc", server.fetch);
}

describe("ApiClient", () => {
  it("returns the service payload verbatim for power", async () => {
    const server = new FixtureServer().serve("power.therapy");
    const fixture = loadFixture("power.therapy");
    const client = clientFor(server);
    const result = await client.power(fixture.request as DesignBody);
    expect(result).toEqual(fixture.response);
    expect(server.calls[0]?.url).toBe("http://svc/v1/power");
    expect(server.calls[0]?.body).toEqual(fixture.request);
  });

  it("returns sample size and design effect payloads verbatim", async () => {
    const server = new FixtureServer().serve(
      "samplesize.therapy", "designeffect.therapy");
    const client = clientFor(server);
    const size = loadFixture("samplesize.therapy");
    const effect = loadFixture("designeffect.therapy");
    await expect(client.sampleSize(size.request as never))
      .resolves.toEqual(size.response);
    await expect(client.designEffect(effect.request as never))
      .resolves.toEqual(effect.response);
  });

  it("maps 422 onto ApiError with the violated condition", async () => {
    const server = new FixtureServer().serve("error.domain");
    const fixture = loadFixture("error.domain");
    const client = clientFor(server);
    const failure = await client.power(fixture.request as DesignBody)
      .then(() => null, (err) => err);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(422);
    expect((failure as ApiError).message).toMatch(/lambda3/);
  });

  it("maps 400 onto ApiError naming the malformed field", async () => {
    const server = new FixtureServer().serve("error.malformed");
    const fixture = loadFixture("error.malformed");
    const client = clientFor(server);
    const failure = await client.power(fixture.request as DesignBody)
      .then(() => null, (err) => err);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(400);
    expect((failure as ApiError).message).toMatch(/dims\.l/);
  });
});

describe("RequestChannel", () => {
  it("aborts the in-flight request when a newer one starts", async () => {
    const gate = new GatedFetch();
    const client = new ApiClient("", gate.fetch);
    const channel = new RequestChannel();
    const fixture = loadFixture("power.therapy");

    const first = channel.run((signal) =>
      client.power(fixture.request as DesignBody, signal));
    const second = channel.run((signal) =>
      client.power(fixture.request as DesignBody, signal));

    expect(gate.pending.length).toBe(2);
    gate.release(1, 200, fixture.response);

    // the superseded call resolves null instead of surfacing an error
    await expect(first).resolves.toBeNull();
    await expect(second).resolves.toEqual(fixture.response);
  });

  it("propagates real failures of the current request", async () => {
    const server = new FixtureServer().serve("error.domain");
    const client = clientFor(server);
    const channel = new RequestChannel();
    const fixture = loadFixture("error.domain");
    await expect(
      channel.run((signal) => client.power(fixture.request as DesignBody, signal)),
    ).rejects.toBeInstanceOf(ApiError);
  });
});
