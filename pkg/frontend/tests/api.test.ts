// Client plumbing: stale-response discard and error envelope decoding.

import { describe, expect, it } from "vitest";

import { ApiError, LatestOnly, MeshApi } from "../src/api.js";

function deferred<T>() {
  let resolve!: (value: T) => void;
  const promise = new Promise<T>((r) => (resolve = r));
  return { promise, resolve };
}

describe("LatestOnly", () => {
  it("discards a slow response that was superseded", async () => {
    const gate = new LatestOnly<string>();
    const slow = deferred<string>();
    const fast = deferred<string>();
    const first = gate.run(() => slow.promise);
    const second = gate.run(() => fast.promise);
    fast.resolve("fresh");
    slow.resolve("stale");
    expect(await second).toBe("fresh");
    expect(await first).toBeUndefined();
  });

  it("passes through when requests do not overlap", async () => {
    const gate = new LatestOnly<number>();
    expect(await gate.run(async () => 1)).toBe(1);
    expect(await gate.run(async () => 2)).toBe(2);
  });
});

describe("MeshApi", () => {
  it("decodes error envelopes into ApiError", async () => {
    const api = new MeshApi("", async () =>
      new Response(
        JSON.stringify({
          error: { code: "validation-errors", message: "nope", details: [] },
        }),
        { status: 400, headers: { "content-type": "application/json" } },
      ),
    );
    await expect(api.getConfig("n1")).rejects.toMatchObject({
      status: 400,
      envelope: { error: { code: "validation-errors" } },
    });
    try {
      await api.getConfig("n1");
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
    }
  });

  it("builds tag query strings the way the API documents them", async () => {
    const urls: string[] = [];
    const api = new MeshApi("", async (url) => {
      urls.push(url);
      return new Response("[]", { headers: { "content-type": "application/json" } });
    });
    await api.listStreams({ node: "n1", metric: "uptime" });
    expect(urls[0]).toBe("/api/streams?tags.node=n1&tags.metric=uptime");
    await api.datapoints(3, "30min", 0, 600);
    expect(urls[1]).toBe("/api/streams/3/datapoints?granularity=30min&from=0&to=600");
  });
});
