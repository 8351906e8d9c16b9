/** Pure chart geometry for the multi-series time chart.
 *
 * The hover readout renders the API's number verbatim (ECMAScript shortest
 * round-trip formatting of the received value) -- the dashboard never
 * rounds or recomputes what the server sent.
 */

import type { SeriesBin, TopicSeries } from "./api.js";

export interface Scale {
  (value: number): number;
  invert(pixel: number): number;
}

export function linearScale(
  [d0, d1]: [number, number],
  [r0, r1]: [number, number],
): Scale {
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  scale.invert = (pixel: number) => d0 + ((pixel - r0) / (r1 - r0 || 1)) * span;
  return scale;
}

export function clampWindow(
  start: number,
  end: number,
  nBins: number,
): [number, number] {
  const lo = Math.max(0, Math.min(Math.floor(start), nBins - 1));
  const hi = Math.max(lo, Math.min(Math.floor(end), nBins - 1));
  return [lo, hi];
}

export function windowedBins(
  series: TopicSeries,
  window: [number, number] | null,
): SeriesBin[] {
  if (!window) return series.bins;
  const [lo, hi] = clampWindow(window[0], window[1], series.bins.length);
  return series.bins.filter((b) => b.bin_id >= lo && b.bin_id <= hi);
}

export function binValue(bin: SeriesBin, relative: boolean): number {
  return relative ? bin.relative : bin.count;
}

export function yDomain(
  seriesList: TopicSeries[],
  relative: boolean,
  window: [number, number] | null,
): [number, number] {
  let max = 0;
  for (const series of seriesList) {
    for (const bin of windowedBins(series, window)) {
      max = Math.max(max, binValue(bin, relative));
    }
  }
  return [0, max || 1];
}

export function seriesPath(
  bins: SeriesBin[],
  relative: boolean,
  x: Scale,
  y: Scale,
): string {
  let path = "";
  bins.forEach((bin, i) => {
    const px = x(bin.bin_id);
    const py = y(binValue(bin, relative));
    path += `${i === 0 ? "M" : "L"}${px.toFixed(2)},${py.toFixed(2)}`;
  });
  return path;
}

/** Bin id nearest to a pixel position within the visible window. */
export function hoverBinId(
  pixelX: number,
  x: Scale,
  window: [number, number],
): number {
  const [lo, hi] = window;
  const raw = Math.round(x.invert(pixelX));
  return Math.max(lo, Math.min(hi, raw));
}

/** Exact textual value; no rounding. */
export function hoverText(bin: SeriesBin, relative: boolean): string {
  return String(binValue(bin, relative));
}

/** Tooltip readout: always the bin's relative frequency, verbatim. */
export function hoverReadout(bin: SeriesBin): string {
  return `${bin.start_date}: relative ${hoverText(bin, true)}`;
}

export const TRACK_COLORS = [
  "#2563eb",
  "#dc2626",
  "#059669",
  "#d97706",
  "#7c3aed",
];

export function trackColor(slot: number): string {
  return TRACK_COLORS[slot % TRACK_COLORS.length];
}
