/** Typed client for the exploration API.
 *
 * The fetch implementation is injectable so contract tests run against a
 * mock server; no endpoint result is ever recomputed client-side.
 */

export type TermWeight = [string, number];

export interface ProjectDescriptor {
  project_id: string;
  name: string;
  serving_entry: string;
  corpus: string;
  topic_count: number;
  document_count: number;
  window: { start: string; end: string };
  granularities: number[];
}

export interface TopicSummary {
  topic_id: number;
  size: number;
  top_terms: TermWeight[];
  mmr_terms: TermWeight[];
  wordcloud: TermWeight[];
}

export interface SeriesBin {
  bin_id: number;
  start_date: string;
  value: number;
  count: number;
  relative: number;
  rank: number | null;
}

export interface TopicSeries {
  topic_id: number;
  granularity_months: number;
  relative: boolean;
  bins: SeriesBin[];
  model_entry: string;
}

export interface SearchHit {
  topic_id: number;
  similarity: number;
  top_terms: string[];
}

export interface OmnibusResult {
  test: string;
  statistic: number;
  p_value: number;
  alpha: number;
  significant: boolean;
}

export interface PairwiseBlock {
  correction: string;
  pairs: { interval_i: number; interval_j: number; raw_p: number; adjusted_p: number }[];
}

export interface TestOutcome {
  topic_id: number;
  granularity_months: number;
  omnibus: OmnibusResult;
  pairwise: PairwiseBlock | null;
  model_entry: string;
}

export interface MapPoint {
  topic_id: number;
  x: number;
  y: number;
  size: number;
  top_terms: string[];
}

export interface IntervalTestBody {
  intervals: [number, number][];
  granularity: number;
  use_relative: boolean;
  alpha?: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "error";
  let message = `HTTP ${resp.status}`;
  try {
    const body = await resp.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  async listProjects(): Promise<ProjectDescriptor[]> {
    const body = await this.getJson<{ projects: ProjectDescriptor[] }>("/projects");
    return body.projects;
  }

  async listTopics(project: string, limit = 30): Promise<TopicSummary[]> {
    const body = await this.getJson<{ topics: TopicSummary[] }>(
      `/projects/${encodeURIComponent(project)}/topics?limit=${limit}`,
    );
    return body.topics;
  }

  async search(project: string, query: string, k = 8): Promise<SearchHit[]> {
    const q = encodeURIComponent(query);
    const body = await this.getJson<{ hits: SearchHit[] }>(
      `/projects/${encodeURIComponent(project)}/search?q=${q}&k=${k}`,
    );
    return body.hits;
  }

  async timeseries(
    project: string,
    topic: number,
    granularity: number,
    relative: boolean,
  ): Promise<TopicSeries> {
    return this.getJson<TopicSeries>(
      `/projects/${encodeURIComponent(project)}/topics/${topic}/timeseries` +
        `?granularity=${granularity}&relative=${relative}`,
    );
  }

  async runIntervalTest(
    project: string,
    topic: number,
    body: IntervalTestBody,
  ): Promise<TestOutcome> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/projects/${encodeURIComponent(project)}/topics/${topic}/test`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as TestOutcome;
  }

  async intertopicMap(project: string): Promise<MapPoint[]> {
    const body = await this.getJson<{ topics: MapPoint[] }>(
      `/projects/${encodeURIComponent(project)}/map`,
    );
    return body.topics;
  }

  documentsUrl(project: string, topic: number): string {
    return `${this.baseUrl}/projects/${encodeURIComponent(project)}/topics/${topic}/documents?format=csv`;
  }
}

/** Discards stale responses: only the latest request per key resolves. */
export class SequencedLoader {
  private tokens = new Map<string, number>();

  async load<T>(key: string, loader: () => Promise<T>): Promise<T | null> {
    const token = (this.tokens.get(key) ?? 0) + 1;
    this.tokens.set(key, token);
    const result = await loader();
    return this.tokens.get(key) === token ? result : null;
  }
}
