/** Word-cloud sizing from normalized term weights (heaviest term = 1). */

import type { TermWeight } from "./api.js";

export interface CloudSpan {
  term: string;
  px: number;
  weight: number;
}

export function cloudSpans(
  pairs: TermWeight[],
  minPx = 13,
  maxPx = 38,
): CloudSpan[] {
  if (!pairs.length) return [];
  const peak = Math.max(...pairs.map(([, w]) => w), 0);
  return pairs.map(([term, weight]) => {
    const t = peak > 0 ? weight / peak : 0;
    return { term, weight, px: Math.round(minPx + t * (maxPx - minPx)) };
  });
}
