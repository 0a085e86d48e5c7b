// Interactive time-series charting over server-side aggregate buckets.
//
// The client never aggregates anything itself: mean/min/max come verbatim
// from bucket records, and granularity is chosen so the visible range never
// asks for more points than the render budget. Zooming in re-queries at a
// finer ladder step; panning re-queries the shifted range.

import type { BucketRecord, RawPoint } from "./api.js";

export const RENDER_BUDGET = 2000;

export const LADDER: { name: string; seconds: number }[] = [
  { name: "10s", seconds: 10 },
  { name: "1min", seconds: 60 },
  { name: "5min", seconds: 300 },
  { name: "30min", seconds: 1800 },
  { name: "3h", seconds: 10800 },
  { name: "1d", seconds: 86400 },
];

export function bucketCount(rangeS: number, granularityS: number): number {
  return Math.ceil(rangeS / granularityS);
}

/**
 * Finest ladder step not finer than the stream's own resolution whose bucket
 * count for the range stays within the budget; falls back to the coarsest.
 */
export function chooseGranularity(
  rangeS: number,
  finestS = 10,
  budget = RENDER_BUDGET,
): { name: string; seconds: number } {
  for (const step of LADDER) {
    if (step.seconds < finestS) {
      continue;
    }
    if (bucketCount(rangeS, step.seconds) <= budget) {
      return step;
    }
  }
  return LADDER[LADDER.length - 1];
}

export interface ChartQuery {
  streamId: number;
  fromTs: number;
  toTs: number;
  granularity: string;
  band: boolean;
}

export function makeQuery(
  streamId: number,
  fromTs: number,
  toTs: number,
  finestS = 10,
  band = true,
): ChartQuery {
  const g = chooseGranularity(toTs - fromTs, finestS);
  return { streamId, fromTs, toTs, granularity: g.name, band };
}

export function zoom(query: ChartQuery, fromTs: number, toTs: number, finestS = 10): ChartQuery {
  return makeQuery(query.streamId, fromTs, toTs, finestS, query.band);
}

export function pan(query: ChartQuery, deltaS: number, finestS = 10): ChartQuery {
  return makeQuery(
    query.streamId,
    query.fromTs + deltaS,
    query.toTs + deltaS,
    finestS,
    query.band,
  );
}

export interface BandSeries {
  ts: number[];
  mean: number[];
  min: number[];
  max: number[];
}

export function isBucketRecord(p: BucketRecord | RawPoint): p is BucketRecord {
  return (p as BucketRecord).m !== undefined;
}

/** Band data taken verbatim from bucket records; no client-side math. */
export function bandFromBuckets(points: (BucketRecord | RawPoint)[]): BandSeries {
  const series: BandSeries = { ts: [], mean: [], min: [], max: [] };
  for (const point of points) {
    if (isBucketRecord(point)) {
      series.ts.push(point.t);
      series.mean.push(point.m);
      series.min.push(point.l);
      series.max.push(point.u);
    } else if (point.v !== null) {
      // raw points at the stream's own resolution collapse the band
      series.ts.push(point.t);
      series.mean.push(point.v);
      series.min.push(point.v);
      series.max.push(point.v);
    }
  }
  return series;
}

export interface BandGeometry {
  meanLine: string; // svg polyline points
  bandPolygon: string; // svg polygon points: max edge forward, min edge back
  empty: boolean;
}

/** Pure pixel-space projection of a band series (rendering, not analysis). */
export function bandGeometry(
  series: BandSeries,
  width: number,
  height: number,
  fromTs: number,
  toTs: number,
): BandGeometry {
  if (series.ts.length === 0 || toTs <= fromTs) {
    return { meanLine: "", bandPolygon: "", empty: true };
  }
  const lo = Math.min(...series.min);
  const hi = Math.max(...series.max);
  const spanY = hi - lo || 1;
  const x = (t: number) => (((t - fromTs) / (toTs - fromTs)) * width).toFixed(1);
  const y = (v: number) => (height - ((v - lo) / spanY) * height).toFixed(1);
  const meanLine = series.ts.map((t, i) => `${x(t)},${y(series.mean[i])}`).join(" ");
  const upper = series.ts.map((t, i) => `${x(t)},${y(series.max[i])}`);
  const lower = [...series.ts.keys()].reverse().map((i) => `${x(series.ts[i])},${y(series.min[i])}`);
  return { meanLine, bandPolygon: [...upper, ...lower].join(" "), empty: false };
}
