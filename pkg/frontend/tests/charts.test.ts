// Chart thrift and band rendering: granularity choice respects the render
// budget, zooming re-queries finer, and no aggregate is computed client-side.

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";

import type { BucketRecord, DatapointsResponse } from "../src/api.js";
import {
  LADDER,
  RENDER_BUDGET,
  bandFromBuckets,
  bandGeometry,
  bucketCount,
  chooseGranularity,
  makeQuery,
  pan,
  zoom,
} from "../src/charts.js";
import { renderChart } from "../src/render.js";

const buckets3h: DatapointsResponse = JSON.parse(
  readFileSync(new URL("./fixtures/buckets_3h.json", import.meta.url), "utf-8"),
);

const FIVE_DAYS = 5 * 86400;

describe("granularity selection", () => {
  it("keeps a five-day range over 10s data within the render budget", () => {
    const query = makeQuery(1, 0, FIVE_DAYS, 10);
    expect(query.granularity).toBe("5min");
    expect(bucketCount(FIVE_DAYS, 300)).toBeLessThanOrEqual(RENDER_BUDGET);
    // one step finer would blow the budget
    expect(bucketCount(FIVE_DAYS, 60)).toBeGreaterThan(RENDER_BUDGET);
  });

  it("zooming into one hour re-queries at a finer granularity", () => {
    const query = makeQuery(1, 0, FIVE_DAYS, 10);
    const zoomed = zoom(query, 0, 3600, 10);
    expect(zoomed.granularity).toBe("10s");
    expect(bucketCount(3600, 10)).toBeLessThanOrEqual(RENDER_BUDGET);
    expect(LADDER.findIndex((l) => l.name === zoomed.granularity)).toBeLessThan(
      LADDER.findIndex((l) => l.name === query.granularity),
    );
  });

  it("panning keeps the granularity for an unchanged span", () => {
    const query = makeQuery(1, 0, FIVE_DAYS, 10);
    const panned = pan(query, 86400, 10);
    expect(panned.granularity).toBe(query.granularity);
    expect(panned.fromTs).toBe(86400);
    expect(panned.toTs).toBe(FIVE_DAYS + 86400);
  });

  it("never exceeds the budget for any range", () => {
    for (const rangeS of [60, 3600, 86400, FIVE_DAYS, 30 * 86400, 365 * 86400]) {
      const g = chooseGranularity(rangeS, 10);
      expect(bucketCount(rangeS, g.seconds)).toBeLessThanOrEqual(RENDER_BUDGET);
    }
  });

  it("respects the stream's own finest resolution", () => {
    expect(chooseGranularity(3600, 1800).name).toBe("30min");
  });
});

describe("band series", () => {
  it("takes mean/min/max verbatim from the server buckets", () => {
    const band = bandFromBuckets(buckets3h.points);
    const records = buckets3h.points as BucketRecord[];
    expect(band.ts).toEqual(records.map((p) => p.t));
    expect(band.mean).toEqual(records.map((p) => p.m));
    expect(band.min).toEqual(records.map((p) => p.l));
    expect(band.max).toEqual(records.map((p) => p.u));
    for (let i = 0; i < band.ts.length; i++) {
      expect(band.min[i]).toBeLessThanOrEqual(band.mean[i]);
      expect(band.mean[i]).toBeLessThanOrEqual(band.max[i]);
    }
  });

  it("collapses the band to the line for a constant stream", () => {
    const constant = bandFromBuckets([
      { t: 0, c: 6, s: 30, ss: 150, m: 5, l: 5, u: 5, d: 0 },
      { t: 60, c: 6, s: 30, ss: 150, m: 5, l: 5, u: 5, d: 0 },
    ]);
    expect(constant.min).toEqual(constant.mean);
    expect(constant.max).toEqual(constant.mean);
  });

  it("treats raw points as a degenerate band and skips nulls", () => {
    const band = bandFromBuckets([
      { t: 0, v: 1 },
      { t: 10, v: null },
      { t: 20, v: 3 },
    ]);
    expect(band.ts).toEqual([0, 20]);
    expect(band.mean).toEqual([1, 3]);
    expect(band.min).toEqual(band.mean);
  });
});

describe("chart rendering", () => {
  it("draws a band polygon plus a mean polyline", () => {
    const band = bandFromBuckets(buckets3h.points);
    const geometry = bandGeometry(band, 900, 240, 0, FIVE_DAYS);
    expect(geometry.empty).toBe(false);
    const svg = renderChart(geometry, 900, 240);
    expect(svg).toContain('<polygon class="band"');
    expect(svg).toContain('<polyline class="mean"');
  });

  it("renders an empty range as an empty plot, not an error", () => {
    const geometry = bandGeometry(bandFromBuckets([]), 900, 240, 0, 1);
    expect(geometry.empty).toBe(true);
    expect(renderChart(geometry, 900, 240)).toContain("empty");
  });
});
