import { describe, expect, it } from "vitest";

import type { TopicSeries } from "../src/api.js";
import {
  clampWindow,
  hoverBinId,
  hoverReadout,
  hoverText,
  linearScale,
  seriesPath,
  windowedBins,
  yDomain,
} from "../src/chart.js";
import { createMockServer, rawFixture } from "./mockServer.js";
import { ApiClient } from "../src/api.js";

async function loadSeries(topic = 0, granularity = 12): Promise<TopicSeries> {
  const server = createMockServer();
  const api = new ApiClient("", server.fetch);
  return api.timeseries("synthetic", topic, granularity, true);
}

describe("hover readout", () => {
  it("byte-matches the API's relative-frequency literals", async () => {
    const raw = rawFixture("timeseries_t0_g12.json");
    const series = await loadSeries(0, 12);
    // extract each bin's relative literal exactly as it appeared on the wire
    const literals = [...raw.matchAll(/"relative":([0-9eE+.-]+)/g)].map((m) => m[1]);
    expect(literals).toHaveLength(series.bins.length);
    let checkedNonZero = 0;
    series.bins.forEach((bin, i) => {
      if (bin.relative !== 0) {
        expect(hoverText(bin, true)).toBe(literals[i]);
        // the tooltip always reads out the relative frequency verbatim,
        // even when the chart itself draws absolute counts
        expect(hoverReadout(bin)).toBe(`${bin.start_date}: relative ${literals[i]}`);
        checkedNonZero += 1;
      }
    });
    expect(checkedNonZero).toBeGreaterThanOrEqual(10);
  });

  it("shows counts verbatim in absolute mode", async () => {
    const series = await loadSeries(1, 12);
    for (const bin of series.bins) {
      expect(hoverText(bin, false)).toBe(String(bin.count));
    }
  });
});

describe("window clamping", () => {
  it("clamps a slider focused on the last three bins", () => {
    expect(clampWindow(15, 99, 18)).toEqual([15, 17]);
  });

  it("never inverts the window", () => {
    expect(clampWindow(10, 2, 18)).toEqual([10, 10]);
    expect(clampWindow(-4, -1, 18)).toEqual([0, 0]);
  });

  it("windowedBins returns only bins inside the focus", async () => {
    const series = await loadSeries(0, 12);
    const bins = windowedBins(series, [15, 17]);
    expect(bins.map((b) => b.bin_id)).toEqual([15, 16, 17]);
  });
});

describe("scales and paths", () => {
  it("linear scale maps and inverts consistently", () => {
    const x = linearScale([0, 17], [50, 700]);
    expect(x(0)).toBe(50);
    expect(x(17)).toBe(700);
    expect(Math.round(x.invert(x(9)))).toBe(9);
  });

  it("one path segment per bin, monotone in x", async () => {
    const series = await loadSeries(2, 12);
    const x = linearScale([0, 17], [50, 700]);
    const y = linearScale(yDomain([series], true, null), [280, 20]);
    const path = seriesPath(series.bins, true, x, y);
    const moves = path.match(/[ML]/g) ?? [];
    expect(moves).toHaveLength(series.bins.length);
    expect(path.startsWith("M")).toBe(true);
    const xs = [...path.matchAll(/[ML]([0-9.]+),/g)].map((m) => Number(m[1]));
    expect(xs).toEqual([...xs].sort((a, b) => a - b));
  });

  it("hover pixel resolves to the nearest bin inside the window", () => {
    const x = linearScale([0, 17], [50, 700]);
    expect(hoverBinId(x(9), x, [0, 17])).toBe(9);
    expect(hoverBinId(x(0) - 40, x, [0, 17])).toBe(0);
    expect(hoverBinId(x(17) + 40, x, [5, 17])).toBe(17);
    expect(hoverBinId(x(3), x, [5, 17])).toBe(5);
  });
});

describe("y domain", () => {
  it("covers the maximum of the visible tracks only", async () => {
    const a = await loadSeries(0, 12);
    const b = await loadSeries(3, 12);
    const [lo, hi] = yDomain([a, b], false, null);
    expect(lo).toBe(0);
    const max = Math.max(
      ...a.bins.map((bin) => bin.count),
      ...b.bins.map((bin) => bin.count),
    );
    expect(hi).toBe(max);
  });
});
