/** Interval selection and validation for the statistical-test panel.
 *
 * Validation runs before any request: an invalid selection (overlap, out
 * of range, fewer than two intervals) never reaches the server.
 */

import type { IntervalTestBody, OmnibusResult } from "./api.js";

export interface Interval {
  start: number;
  end: number;
}

export type Validation = { ok: true } | { ok: false; reason: string };

export function validateIntervals(intervals: Interval[], nBins: number): Validation {
  if (intervals.length < 2) {
    return { ok: false, reason: "select at least two intervals" };
  }
  for (const iv of intervals) {
    if (!Number.isInteger(iv.start) || !Number.isInteger(iv.end)) {
      return { ok: false, reason: "interval bounds must be whole bins" };
    }
    if (iv.start < 0 || iv.end >= nBins) {
      return { ok: false, reason: `bins must lie in 0..${nBins - 1}` };
    }
    if (iv.start > iv.end) {
      return { ok: false, reason: "interval start is after its end" };
    }
  }
  for (let i = 0; i < intervals.length; i++) {
    for (let j = i + 1; j < intervals.length; j++) {
      const a = intervals[i];
      const b = intervals[j];
      if (a.start <= b.end && b.start <= a.end) {
        return {
          ok: false,
          reason: `intervals ${i + 1} and ${j + 1} overlap`,
        };
      }
    }
  }
  return { ok: true };
}

export function intervalTestBody(
  intervals: Interval[],
  granularity: number,
  useRelative: boolean,
  alpha = 0.05,
): IntervalTestBody {
  return {
    intervals: intervals.map((iv) => [iv.start, iv.end] as [number, number]),
    granularity,
    use_relative: useRelative,
    alpha,
  };
}

/** Badge line for a test outcome, e.g. "not significant, p=1.00". */
export function testBadge(omnibus: OmnibusResult): string {
  const label = omnibus.significant ? "significant" : "not significant";
  return `${label}, p=${omnibus.p_value.toFixed(2)}`;
}
