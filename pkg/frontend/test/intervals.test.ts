import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { intervalTestBody, testBadge, validateIntervals } from "../src/intervals.js";
import { createMockServer } from "./mockServer.js";

describe("interval validation", () => {
  it("accepts disjoint in-range intervals", () => {
    const verdict = validateIntervals(
      [{ start: 0, end: 8 }, { start: 9, end: 17 }],
      18,
    );
    expect(verdict).toEqual({ ok: true });
  });

  it("flags overlap, including shared endpoints", () => {
    const verdict = validateIntervals(
      [{ start: 0, end: 5 }, { start: 5, end: 9 }],
      18,
    );
    expect(verdict.ok).toBe(false);
  });

  it("flags out-of-range and inverted intervals", () => {
    expect(validateIntervals([{ start: 0, end: 20 }, { start: 21, end: 25 }], 18).ok).toBe(false);
    expect(validateIntervals([{ start: 4, end: 2 }, { start: 6, end: 9 }], 18).ok).toBe(false);
    expect(validateIntervals([{ start: 0, end: 4 }], 18).ok).toBe(false);
  });
});

describe("request gating", () => {
  it("an overlapping selection never reaches the server", async () => {
    const server = createMockServer();
    const api = new ApiClient("", server.fetch);
    const intervals = [{ start: 0, end: 5 }, { start: 5, end: 9 }];

    // the UI flow: validate first, POST only when valid
    const verdict = validateIntervals(intervals, 18);
    if (verdict.ok) {
      await api.runIntervalTest("synthetic", 3, intervalTestBody(intervals, 12, true));
    }
    expect(verdict.ok).toBe(false);
    expect(server.requests).toHaveLength(0);
  });

  it("a valid selection posts exactly one request with the expected body", async () => {
    const server = createMockServer();
    const api = new ApiClient("", server.fetch);
    const intervals = [{ start: 0, end: 13 }, { start: 14, end: 17 }];
    const verdict = validateIntervals(intervals, 18);
    expect(verdict.ok).toBe(true);
    const outcome = await api.runIntervalTest(
      "synthetic", 3, intervalTestBody(intervals, 12, false),
    );
    expect(server.requests).toHaveLength(1);
    expect(server.requests[0].method).toBe("POST");
    expect(JSON.parse(server.requests[0].body ?? "{}")).toMatchObject({
      intervals: [[0, 13], [14, 17]],
      granularity: 12,
      use_relative: false,
    });
    expect(outcome.omnibus.significant).toBe(true);
  });
});

describe("result badge", () => {
  it("identical flat intervals render 'not significant, p=1.00'", async () => {
    const server = createMockServer();
    const api = new ApiClient("", server.fetch);
    const outcome = await api.runIntervalTest(
      "synthetic", -1,
      intervalTestBody([{ start: 0, end: 8 }, { start: 9, end: 17 }], 12, false),
    );
    expect(outcome.omnibus.p_value).toBe(1.0);
    expect(testBadge(outcome.omnibus)).toBe("not significant, p=1.00");
  });

  it("a significant outcome renders with its API p-value", async () => {
    const server = createMockServer();
    const api = new ApiClient("", server.fetch);
    const outcome = await api.runIntervalTest(
      "synthetic", 3,
      intervalTestBody([{ start: 0, end: 13 }, { start: 14, end: 17 }], 12, false),
    );
    expect(outcome.omnibus.significant).toBe(true);
    expect(testBadge(outcome.omnibus)).toBe("significant, p=0.00");
  });
});
