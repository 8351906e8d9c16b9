/** Comparison-view state: selected topics, visibility, range window.
 *
 * Every field serializes into the URL query string so a reload (or a
 * shared link) reproduces the view exactly. Topic selection accumulates
 * across consecutive searches and is capped at five tracks.
 */

export const MAX_SELECTED = 5;
export const GRANULARITIES = [1, 3, 6, 12];

export interface ComparisonState {
  project: string;
  selected: number[];
  hidden: number[];          // deselected tracks keep their selection slot
  granularity: number;
  relative: boolean;
  windowStart: number | null;
  windowEnd: number | null;
}

export type AddOutcome =
  | { ok: true; state: ComparisonState }
  | { ok: false; reason: "limit" | "duplicate" };

export function emptyState(project: string): ComparisonState {
  return {
    project,
    selected: [],
    hidden: [],
    granularity: 12,
    relative: true,
    windowStart: null,
    windowEnd: null,
  };
}

export function addTopic(state: ComparisonState, topicId: number): AddOutcome {
  if (state.selected.includes(topicId)) return { ok: false, reason: "duplicate" };
  if (state.selected.length >= MAX_SELECTED) return { ok: false, reason: "limit" };
  return { ok: true, state: { ...state, selected: [...state.selected, topicId] } };
}

export function removeTopic(state: ComparisonState, topicId: number): ComparisonState {
  return {
    ...state,
    selected: state.selected.filter((t) => t !== topicId),
    hidden: state.hidden.filter((t) => t !== topicId),
  };
}

export function toggleTrack(state: ComparisonState, topicId: number): ComparisonState {
  if (!state.selected.includes(topicId)) return state;
  const hidden = state.hidden.includes(topicId)
    ? state.hidden.filter((t) => t !== topicId)
    : [...state.hidden, topicId];
  return { ...state, hidden };
}

export function visibleTracks(state: ComparisonState): number[] {
  return state.selected.filter((t) => !state.hidden.includes(t));
}

export function setGranularity(state: ComparisonState, granularity: number): ComparisonState {
  if (!GRANULARITIES.includes(granularity)) return state;
  // a new granularity re-bins the series; the old window no longer applies
  return { ...state, granularity, windowStart: null, windowEnd: null };
}

export function setRelative(state: ComparisonState, relative: boolean): ComparisonState {
  return { ...state, relative };
}

export function setWindow(
  state: ComparisonState,
  start: number,
  end: number,
  nBins: number,
): ComparisonState {
  if (nBins < 1) return state;
  const lo = Math.max(0, Math.min(Math.floor(start), nBins - 1));
  const hi = Math.max(lo, Math.min(Math.floor(end), nBins - 1));
  return { ...state, windowStart: lo, windowEnd: hi };
}

export function clearWindow(state: ComparisonState): ComparisonState {
  return { ...state, windowStart: null, windowEnd: null };
}

export function serializeState(state: ComparisonState): string {
  const params = new URLSearchParams();
  params.set("p", state.project);
  if (state.selected.length) params.set("topics", state.selected.join(","));
  if (state.hidden.length) params.set("hidden", state.hidden.join(","));
  params.set("g", String(state.granularity));
  params.set("rel", state.relative ? "1" : "0");
  if (state.windowStart !== null && state.windowEnd !== null) {
    params.set("win", `${state.windowStart}-${state.windowEnd}`);
  }
  return params.toString();
}

function parseIds(raw: string | null): number[] {
  if (!raw) return [];
  const out: number[] = [];
  for (const part of raw.split(",")) {
    const v = Number.parseInt(part, 10);
    if (Number.isFinite(v) && !out.includes(v)) out.push(v);
  }
  return out;
}

export function parseState(query: string, fallbackProject: string): ComparisonState {
  const params = new URLSearchParams(query);
  const state = emptyState(params.get("p") ?? fallbackProject);
  state.selected = parseIds(params.get("topics")).slice(0, MAX_SELECTED);
  state.hidden = parseIds(params.get("hidden")).filter((t) => state.selected.includes(t));
  const g = Number.parseInt(params.get("g") ?? "12", 10);
  if (GRANULARITIES.includes(g)) state.granularity = g;
  state.relative = params.get("rel") !== "0";
  const win = params.get("win");
  if (win && /^\d+-\d+$/.test(win)) {
    const [start, end] = win.split("-").map((v) => Number.parseInt(v, 10));
    if (start <= end) {
      state.windowStart = start;
      state.windowEnd = end;
    }
  }
  return state;
}
