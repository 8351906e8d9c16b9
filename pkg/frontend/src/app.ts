/** Dashboard application: project picker, single-topic card, comparison view.
 *
 * All state lives in the URL query string; rendering is plain DOM + SVG.
 * Numbers shown anywhere come straight from API responses.
 */

import {
  ApiClient,
  ApiError,
  SequencedLoader,
  type ProjectDescriptor,
  type TopicSeries,
  type TopicSummary,
} from "./api.js";
import {
  hoverBinId,
  hoverReadout,
  linearScale,
  seriesPath,
  trackColor,
  windowedBins,
  yDomain,
} from "./chart.js";
import {
  intervalTestBody,
  testBadge,
  validateIntervals,
  type Interval,
} from "./intervals.js";
import { RADAR_TERMS, radarPolygon, radarRings, radarSpokes } from "./radar.js";
import {
  addTopic,
  emptyState,
  parseState,
  removeTopic,
  serializeState,
  setGranularity,
  setRelative,
  setWindow,
  toggleTrack,
  visibleTracks,
  GRANULARITIES,
  MAX_SELECTED,
  type ComparisonState,
} from "./state.js";
import { cloudSpans } from "./wordcloud.js";

const SVG_NS = "http://www.w3.org/2000/svg";

type Attrs = Record<string, string | ((event: Event) => void)>;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") node.addEventListener(key, value);
    else node.setAttribute(key, value);
  }
  for (const child of children) node.append(child);
  return node;
}

function svgEl(tag: string, attrs: Record<string, string> = {}): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

interface Route {
  view: "picker" | "topic" | "comparison";
  project: string;
  topic: number;
  state: ComparisonState;
}

function parseRoute(query: string): Route {
  const params = new URLSearchParams(query);
  const view = (params.get("view") ?? "picker") as Route["view"];
  const project = params.get("p") ?? "";
  const topic = Number.parseInt(params.get("t") ?? "-1", 10);
  return { view, project, topic, state: parseState(query, project) };
}

export class App {
  private api: ApiClient;
  private root: HTMLElement;
  private loader = new SequencedLoader();
  private seriesCache = new Map<string, TopicSeries>();

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    window.addEventListener("popstate", () => void this.render());
  }

  start(): void {
    void this.render();
  }

  private navigate(params: string): void {
    history.pushState(null, "", `?${params}`);
    void this.render();
  }

  private async render(): Promise<void> {
    const route = parseRoute(location.search);
    this.root.replaceChildren();
    if (route.view === "topic" && route.project) {
      await this.renderTopicPage(route.project, route.topic);
    } else if (route.view === "comparison" && route.project) {
      await this.renderComparison(route.state);
    } else {
      await this.renderPicker();
    }
  }

  // ---- project picker + trending gallery ---------------------------------

  private async renderPicker(): Promise<void> {
    this.root.append(el("h1", {}, ["Topic explorer"]));
    let projects: ProjectDescriptor[];
    try {
      projects = await this.api.listProjects();
    } catch (error) {
      this.root.append(this.retryBanner(error, () => void this.render()));
      return;
    }
    if (!projects.length) {
      this.root.append(el("p", { class: "empty" }, ["No projects are configured."]));
      return;
    }
    for (const project of projects) {
      const card = el("section", { class: "project-card" }, [
        el("h2", {}, [project.name]),
        el("p", { class: "meta" }, [
          `${project.topic_count} topics · ${project.document_count} documents · ` +
            `${project.window.start} to ${project.window.end}`,
        ]),
      ]);
      const searchRow = el("div", { class: "search-row" });
      const input = el("input", {
        type: "search",
        placeholder: "search topics by keyword…",
      });
      const button = el("button", {
        click: () => void this.renderSearch(project.project_id, input.value, card),
      }, ["Search"]);
      input.addEventListener("keydown", (event) => {
        if ((event as KeyboardEvent).key === "Enter") button.click();
      });
      searchRow.append(input, button);
      card.append(searchRow);
      card.append(el("div", { class: "search-results" }));
      card.append(el("h3", {}, ["Trending topics"]));
      const gallery = el("div", { class: "gallery" });
      card.append(gallery);
      this.root.append(card);
      void this.fillGallery(project.project_id, gallery);
    }
  }

  private async fillGallery(project: string, gallery: HTMLElement): Promise<void> {
    try {
      const topics = await this.api.listTopics(project, 30);
      gallery.replaceChildren(
        ...topics.map((topic) => this.topicCard(project, topic)),
      );
    } catch (error) {
      gallery.replaceChildren(this.retryBanner(error, () => void this.fillGallery(project, gallery)));
    }
  }

  private topicCard(project: string, topic: TopicSummary): HTMLElement {
    const terms = topic.top_terms.slice(0, 4).map(([t]) => t).join(", ");
    return el("button", {
      class: "topic-card",
      click: () => this.navigate(`view=topic&p=${encodeURIComponent(project)}&t=${topic.topic_id}`),
    }, [
      el("strong", {}, [`Topic ${topic.topic_id}`]),
      el("span", { class: "size" }, [`${topic.size} docs`]),
      el("span", { class: "terms" }, [terms]),
    ]);
  }

  private async renderSearch(project: string, query: string, card: HTMLElement): Promise<void> {
    const container = card.querySelector<HTMLElement>(".search-results");
    if (!container || !query.trim()) return;
    try {
      const hits = await this.api.search(project, query, 8);
      container.replaceChildren(
        el("ul", { class: "hits" },
          hits.map((hit) =>
            el("li", {}, [
              el("a", {
                href: `?view=topic&p=${encodeURIComponent(project)}&t=${hit.topic_id}`,
                click: (event) => {
                  event.preventDefault();
                  this.navigate(`view=topic&p=${encodeURIComponent(project)}&t=${hit.topic_id}`);
                },
              }, [`Topic ${hit.topic_id}`]),
              ` (similarity ${hit.similarity.toFixed(3)}) · ${hit.top_terms.join(", ")} `,
              el("button", {
                class: "small",
                click: () => {
                  const outcome = addTopic(parseState(location.search, project), hit.topic_id);
                  if (!outcome.ok) {
                    container.prepend(this.notice(
                      outcome.reason === "limit"
                        ? `at most ${MAX_SELECTED} topics can be compared`
                        : "topic already selected",
                    ));
                    return;
                  }
                  this.navigate(
                    `view=comparison&${serializeState({ ...outcome.state, project })}`,
                  );
                },
              }, ["compare"]),
            ]),
          ),
        ),
        el("a", {
          href: `?view=comparison&${serializeState({ ...emptyState(project), selected: hits.slice(0, 1).map((h) => h.topic_id) })}`,
          click: (event) => {
            event.preventDefault();
            this.navigate(
              `view=comparison&${serializeState({ ...emptyState(project), selected: hits.slice(0, 1).map((h) => h.topic_id) })}`,
            );
          },
        }, ["open comparison view"]),
      );
    } catch (error) {
      container.replaceChildren(this.retryBanner(error, () => void this.renderSearch(project, query, card)));
    }
  }

  // ---- single-topic page ---------------------------------------------------

  private async renderTopicPage(project: string, topicId: number): Promise<void> {
    this.root.append(this.backLink());
    let topics: TopicSummary[];
    try {
      topics = await this.api.listTopics(project, 1000);
    } catch (error) {
      this.root.append(this.retryBanner(error, () => void this.render()));
      return;
    }
    const topic = topics.find((t) => t.topic_id === topicId);
    if (!topic) {
      this.root.append(el("p", { class: "empty" }, [`Topic ${topicId} was not found.`]));
      return;
    }
    const card = el("section", { class: "topic-page" }, [
      el("h1", {}, [`Topic ${topic.topic_id}`]),
      el("p", { class: "meta" }, [`${topic.size} documents`]),
    ]);

    const cloud = el("div", { class: "wordcloud" });
    for (const span of cloudSpans(topic.wordcloud)) {
      cloud.append(el("span", { style: `font-size:${span.px}px` }, [span.term + " "]));
    }
    card.append(el("h3", {}, ["Word cloud"]), cloud);

    card.append(
      el("h3", {}, ["Term radar"]),
      el("p", { class: "fineprint" }, [
        "star diagram interpreted as a radar of the top term weights",
      ]),
      this.radarSvg(topic),
    );

    card.append(
      el("p", {}, [
        el("a", { href: this.api.documentsUrl(project, topicId) }, [
          "download assigned publications (CSV)",
        ]),
      ]),
    );

    card.append(el("h3", {}, ["Interval comparison"]));
    card.append(await this.intervalPanel(project, topicId));
    this.root.append(card);
  }

  private radarSvg(topic: TopicSummary): SVGElement {
    const size = 260;
    const cx = size / 2;
    const cy = size / 2;
    const radius = 88;
    const top = topic.top_terms.slice(0, RADAR_TERMS);
    const svg = svgEl("svg", {
      width: String(size),
      height: String(size),
      class: "radar",
    });
    for (const ring of radarRings(cx, cy, radius)) {
      svg.append(svgEl("circle", {
        cx: String(cx), cy: String(cy), r: String(ring),
        class: "radar-ring",
      }));
    }
    const spokes = radarSpokes(top.length, cx, cy, radius);
    spokes.forEach((spoke, i) => {
      svg.append(svgEl("line", {
        x1: String(cx), y1: String(cy),
        x2: String(spoke.x), y2: String(spoke.y), class: "radar-spoke",
      }));
      const label = svgEl("text", {
        x: String(spoke.labelX), y: String(spoke.labelY),
        "text-anchor": "middle", class: "radar-label",
      });
      label.textContent = top[i][0];
      svg.append(label);
    });
    svg.append(svgEl("polygon", {
      points: radarPolygon(top.map(([, w]) => w), cx, cy, radius),
      class: "radar-area",
    }));
    return svg;
  }

  private async intervalPanel(project: string, topicId: number): Promise<HTMLElement> {
    const panel = el("div", { class: "interval-panel" });
    let nBins = 18;
    try {
      const series = await this.api.timeseries(project, topicId, 12, false);
      nBins = series.bins.length;
    } catch {
      /* fall back to the yearly default */
    }
    const rows = el("div", { class: "interval-rows" });
    const intervals: Interval[] = [
      { start: 0, end: Math.floor((nBins - 1) / 2) },
      { start: Math.floor((nBins - 1) / 2) + 1, end: nBins - 1 },
    ];
    const feedback = el("p", { class: "feedback" });
    const badge = el("p", { class: "badge" });

    const redraw = () => {
      rows.replaceChildren(
        ...intervals.map((iv, idx) =>
          el("div", { class: "interval-row" }, [
            `interval ${idx + 1}: bins `,
            this.numberInput(iv.start, (v) => { iv.start = v; }),
            " to ",
            this.numberInput(iv.end, (v) => { iv.end = v; }),
          ]),
        ),
      );
    };
    redraw();

    const runButton = el("button", {
      click: () => {
        feedback.textContent = "";
        badge.textContent = "";
        const verdict = validateIntervals(intervals, nBins);
        if (!verdict.ok) {
          feedback.textContent = verdict.reason;   // invalid: no request is sent
          return;
        }
        void this.api
          .runIntervalTest(project, topicId, intervalTestBody(intervals, 12, true))
          .then((outcome) => {
            badge.textContent = testBadge(outcome.omnibus);
            badge.className = outcome.omnibus.significant ? "badge sig" : "badge";
            if (outcome.pairwise) {
              badge.append(el("span", { class: "fineprint" }, [
                ` · ${outcome.pairwise.pairs.length} pairwise comparisons (${outcome.pairwise.correction})`,
              ]));
            }
          })
          .catch((error) => {
            feedback.textContent = error instanceof ApiError ? error.message : String(error);
          });
      },
    }, ["Run test"]);

    panel.append(
      rows,
      el("div", { class: "interval-actions" }, [
        el("button", {
          class: "small",
          click: () => { intervals.push({ start: 0, end: 0 }); redraw(); },
        }, ["add interval"]),
        runButton,
      ]),
      feedback,
      badge,
    );
    return panel;
  }

  private numberInput(value: number, update: (v: number) => void): HTMLInputElement {
    const input = el("input", { type: "number", value: String(value), class: "bin-input" });
    input.addEventListener("change", () => update(Number.parseInt(input.value, 10)));
    return input;
  }

  // ---- comparison view -----------------------------------------------------

  private async renderComparison(state: ComparisonState): Promise<void> {
    this.root.append(this.backLink());
    this.root.append(el("h1", {}, ["Topic comparison"]));
    if (!state.selected.length) {
      this.root.append(el("p", { class: "empty" }, [
        "No topics selected yet; pick some from a search.",
      ]));
      return;
    }

    const controls = el("div", { class: "controls" });
    const gSelect = el("select", {
      change: (event) => {
        const value = Number.parseInt((event.target as HTMLSelectElement).value, 10);
        this.navigate(`view=comparison&${serializeState(setGranularity(state, value))}`);
      },
    });
    for (const g of GRANULARITIES) {
      const opt = el("option", { value: String(g) }, [`${g} month${g > 1 ? "s" : ""}`]);
      if (g === state.granularity) opt.setAttribute("selected", "selected");
      gSelect.append(opt);
    }
    const relToggle = el("button", {
      class: "small",
      click: () =>
        this.navigate(`view=comparison&${serializeState(setRelative(state, !state.relative))}`),
    }, [state.relative ? "showing relative frequency" : "showing absolute counts"]);
    controls.append(el("label", {}, ["granularity: ", gSelect]), relToggle);
    this.root.append(controls);

    const chips = el("div", { class: "chips" });
    state.selected.forEach((topicId, slot) => {
      const hidden = state.hidden.includes(topicId);
      chips.append(
        el("span", {
          class: `chip${hidden ? " off" : ""}`,
          style: `border-color:${trackColor(slot)}`,
        }, [
          el("button", {
            class: "chip-toggle",
            click: () =>
              this.navigate(`view=comparison&${serializeState(toggleTrack(state, topicId))}`),
          }, [`topic ${topicId}`]),
          el("button", {
            class: "chip-remove",
            click: () =>
              this.navigate(`view=comparison&${serializeState(removeTopic(state, topicId))}`),
          }, ["×"]),
        ]),
      );
    });
    this.root.append(chips);

    const chartHost = el("div", { class: "chart-host" });
    this.root.append(chartHost);

    const seriesList: TopicSeries[] = [];
    const errors: string[] = [];
    await Promise.all(
      state.selected.map(async (topicId) => {
        const key = `${state.project}/${topicId}/${state.granularity}`;
        try {
          const cached = this.seriesCache.get(key);
          const series =
            cached ??
            (await this.loader.load(key, () =>
              this.api.timeseries(state.project, topicId, state.granularity, state.relative),
            ));
          if (series) {
            this.seriesCache.set(key, series);
            seriesList.push(series);
          }
        } catch (error) {
          errors.push(`topic ${topicId}: ${error instanceof ApiError ? error.message : error}`);
        }
      }),
    );
    for (const message of errors) {
      chartHost.append(el("p", { class: "error-chip" }, [message]));
    }
    const visible = visibleTracks(state);
    const drawn = seriesList
      .filter((s) => visible.includes(s.topic_id))
      .sort((a, b) => state.selected.indexOf(a.topic_id) - state.selected.indexOf(b.topic_id));
    if (drawn.length) {
      const nBins = drawn[0].bins.length;
      const windowRange: [number, number] =
        state.windowStart !== null && state.windowEnd !== null
          ? [state.windowStart, state.windowEnd]
          : [0, nBins - 1];
      chartHost.append(this.chartSvg(state, drawn, windowRange));
      chartHost.append(this.sliderRow(state, nBins, windowRange));
    }
  }

  private chartSvg(
    state: ComparisonState,
    drawn: TopicSeries[],
    windowRange: [number, number],
  ): SVGElement {
    const width = 720;
    const height = 300;
    const margin = { left: 52, right: 16, top: 12, bottom: 28 };
    const x = linearScale(windowRange, [margin.left, width - margin.right]);
    const [y0, y1] = yDomain(drawn, state.relative, windowRange);
    const y = linearScale([y0, y1], [height - margin.bottom, margin.top]);

    const svg = svgEl("svg", { width: String(width), height: String(height), class: "chart" });
    svg.append(svgEl("line", {
      x1: String(margin.left), y1: String(height - margin.bottom),
      x2: String(width - margin.right), y2: String(height - margin.bottom),
      class: "axis",
    }));
    svg.append(svgEl("line", {
      x1: String(margin.left), y1: String(margin.top),
      x2: String(margin.left), y2: String(height - margin.bottom),
      class: "axis",
    }));

    drawn.forEach((series) => {
      const slot = state.selected.indexOf(series.topic_id);
      const path = svgEl("path", {
        d: seriesPath(windowedBins(series, windowRange), state.relative, x, y),
        class: "track",
        stroke: trackColor(slot),
      });
      svg.append(path);
    });

    const tooltip = svgEl("text", {
      x: String(margin.left + 6), y: String(margin.top + 10), class: "tooltip",
    });
    const marker = svgEl("line", { class: "marker", y1: String(margin.top), y2: String(height - margin.bottom) });
    svg.append(marker, tooltip);
    svg.addEventListener("mousemove", (event) => {
      const rect = (svg as unknown as HTMLElement).getBoundingClientRect();
      const px = (event as MouseEvent).clientX - rect.left;
      const binId = hoverBinId(px, x, windowRange);
      marker.setAttribute("x1", String(x(binId)));
      marker.setAttribute("x2", String(x(binId)));
      const lines = drawn
        .map((series) => {
          const bin = series.bins.find((b) => b.bin_id === binId);
          return bin ? `t${series.topic_id} ${hoverReadout(bin)}` : "";
        })
        .filter(Boolean);
      tooltip.textContent = lines.join("  |  ");
    });
    return svg;
  }

  private sliderRow(
    state: ComparisonState,
    nBins: number,
    current: [number, number],
  ): HTMLElement {
    const startInput = el("input", {
      type: "range", min: "0", max: String(nBins - 1), value: String(current[0]),
    });
    const endInput = el("input", {
      type: "range", min: "0", max: String(nBins - 1), value: String(current[1]),
    });
    const apply = () => {
      const next = setWindow(
        state,
        Number.parseInt(startInput.value, 10),
        Number.parseInt(endInput.value, 10),
        nBins,
      );
      this.navigate(`view=comparison&${serializeState(next)}`);
    };
    startInput.addEventListener("change", apply);
    endInput.addEventListener("change", apply);
    return el("div", { class: "slider-row" }, [
      el("span", {}, ["window: "]), startInput, endInput,
      el("button", {
        class: "small",
        click: () => this.navigate(
          `view=comparison&${serializeState({ ...state, windowStart: null, windowEnd: null })}`,
        ),
      }, ["reset"]),
    ]);
  }

  // ---- shared --------------------------------------------------------------

  private backLink(): HTMLElement {
    return el("p", {}, [
      el("a", {
        href: "?view=picker",
        click: (event) => {
          event.preventDefault();
          this.navigate("view=picker");
        },
      }, ["← projects"]),
    ]);
  }

  private retryBanner(error: unknown, retry: () => void): HTMLElement {
    const message = error instanceof ApiError ? error.message : "server unreachable";
    return el("div", { class: "retry-banner" }, [
      `Could not reach the server (${message}). `,
      el("button", { click: () => retry() }, ["Retry"]),
    ]);
  }

  private notice(message: string): HTMLElement {
    return el("p", { class: "notice" }, [message]);
  }
}
