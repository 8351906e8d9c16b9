"""HTTP service over registered topic models.

Each configured project is loaded once into an immutable in-memory bundle
(fitted model, topic representations, precomputed time series, document
metadata); requests only read. Swapping a serving model replaces the whole
bundle atomically. Every response carries the serving registry entry id so
clients can detect swaps.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import dynamics, embed, resolve, topics
from .corpus import DocumentRecord, read_ndjson
from .dynamics import GRANULARITIES, IntervalSpec
from .registry import ModelRegistry

__all__ = ["ProjectBundle", "build_provider", "load_project", "create_app"]


@dataclass
class ProjectBundle:
    """Immutable serving state for one project."""

    project_id: str
    name: str
    entry_id: str
    corpus_path: str
    records: list[DocumentRecord]
    topic_model: topics.TopicModel
    reduced: np.ndarray
    labels: np.ndarray
    series: dict[int, dict[int, dynamics.TopicTimeSeries]]   # granularity -> topic -> series
    provider: embed.EmbeddingProvider
    resolvers: list = field(default_factory=list)
    window: tuple[str, str] = ("", "")

    @property
    def n_topics(self) -> int:
        return self.topic_model.n_topics

    def descriptor(self) -> dict:
        return {
            "project_id": self.project_id,
            "name": self.name,
            "serving_entry": self.entry_id,
            "corpus": self.corpus_path,
            "topic_count": self.n_topics,
            "document_count": len(self.records),
            "window": {"start": self.window[0], "end": self.window[1]},
            "granularities": sorted(self.series),
        }


def build_provider(spec: dict) -> embed.EmbeddingProvider:
    return embed.build_provider(spec)


def _build_resolvers(specs: list[dict]) -> list:
    out = []
    for spec in specs:
        kind = spec.get("kind", "file")
        if kind == "file":
            out.append(resolve.FileDoiResolver(spec["path"]))
        elif kind == "http":
            out.append(
                resolve.HttpDoiResolver(
                    base_url=spec["base_url"], api_key_env=spec.get("api_key_env", "")
                )
            )
        else:
            raise ValueError(f"unknown resolver kind: {kind}")
    return out


def load_project(spec: dict) -> ProjectBundle:
    """Load one project from its pipeline directory per the config entry."""
    pipeline_dir = spec["pipeline_dir"]
    registry = ModelRegistry(os.path.join(pipeline_dir, "registry"))
    entry = registry.best_entry("serving")
    if entry is None:
        raise ValueError(f"project {spec['id']}: no serving model registered")
    fitted_manifold, fitted_clusterer, topic_model = registry.load(entry)
    if topic_model is None:
        raise ValueError(f"project {spec['id']}: serving entry has no topic model")
    corpus_path = os.path.join(pipeline_dir, "corpus.ndjson")
    records = read_ndjson(corpus_path)

    series: dict[int, dict[int, dynamics.TopicTimeSeries]] = {}
    index_path = os.path.join(pipeline_dir, "series", "index.json")
    with open(index_path, "r", encoding="utf-8") as fh:
        index = json.load(fh)
    for granularity in index["granularities"]:
        csv_path = os.path.join(pipeline_dir, "series", f"g{granularity}.csv")
        series[int(granularity)] = dynamics.load_series_csv(csv_path, int(granularity))

    return ProjectBundle(
        project_id=spec["id"],
        name=spec.get("name", spec["id"]),
        entry_id=entry.entry_id,
        corpus_path=corpus_path,
        records=records,
        topic_model=topic_model,
        reduced=fitted_manifold.training_layout,
        labels=topic_model.labels,
        series=series,
        provider=build_provider(spec.get("provider", {"kind": "stub"})),
        resolvers=_build_resolvers(spec.get("resolvers", [])),
        window=(index.get("window_start", ""), index.get("window_end", "")),
    )


def _error(status: int, code: str, message: str, details: dict | None = None):
    raise HTTPException(
        status_code=status,
        detail={"code": code, "message": message, "details": details or {}},
    )


def _topic_summary(bundle: ProjectBundle, rep: topics.TopicRepresentation, terms: int = 10) -> dict:
    return {
        "topic_id": rep.topic_id,
        "size": rep.size,
        "top_terms": [[t, w] for t, w in rep.top_terms[:terms]],
        "mmr_terms": [[t, w] for t, w in rep.mmr_terms],
        "wordcloud": [[t, w] for t, w in topics.wordcloud_export(rep, terms)],
    }


def create_app(config: dict | str) -> FastAPI:
    """Build the service; config is a dict or a path to a JSON file."""
    if isinstance(config, str):
        with open(config, "r", encoding="utf-8") as fh:
            config = json.load(fh)

    app = FastAPI(title="topiclab", version="0.1.0")
    bundles: dict[str, ProjectBundle] = {}
    for spec in config.get("projects", []):
        bundles[spec["id"]] = load_project(spec)
    app.state.bundles = bundles

    def swap_project(spec: dict) -> ProjectBundle:
        """Load a fresh bundle and switch the handle atomically; in-flight
        requests keep the bundle they already resolved."""
        bundle = load_project(spec)
        app.state.bundles[spec["id"]] = bundle
        return bundle

    app.state.swap_project = swap_project

    @app.exception_handler(HTTPException)
    async def handle_http_error(request: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict) or "code" not in detail:
            detail = {"code": "error", "message": str(detail), "details": {}}
        return JSONResponse(status_code=exc.status_code, content=detail)

    def bundle_or_404(project_id: str) -> ProjectBundle:
        bundle = app.state.bundles.get(project_id)
        if bundle is None:
            _error(404, "unknown_project", f"no project {project_id!r}")
        return bundle

    def rep_or_404(bundle: ProjectBundle, topic_id: int) -> topics.TopicRepresentation:
        try:
            return bundle.topic_model.representation(topic_id)
        except KeyError:
            _error(404, "unknown_topic", f"no topic {topic_id} in {bundle.project_id!r}")

    def with_entry(bundle: ProjectBundle, payload: dict) -> JSONResponse:
        payload["model_entry"] = bundle.entry_id
        return JSONResponse(payload, headers={"X-Serving-Entry": bundle.entry_id})

    @app.get("/projects")
    def list_projects():
        return JSONResponse(
            {"projects": [b.descriptor() for b in app.state.bundles.values()]}
        )

    @app.get("/projects/{project_id}/topics")
    def list_topics(project_id: str, sort: str = "size", limit: int = 30):
        bundle = bundle_or_404(project_id)
        if sort != "size":
            _error(400, "bad_sort", f"unsupported sort {sort!r}")
        if limit < 0:
            _error(400, "bad_limit", "limit must be >= 0")
        reps = sorted(bundle.topic_model.representations, key=lambda r: (-r.size, r.topic_id))
        return with_entry(
            bundle, {"topics": [_topic_summary(bundle, r) for r in reps[:limit]]}
        )

    @app.get("/projects/{project_id}/search")
    def search(project_id: str, q: str = "", k: int = 10):
        bundle = bundle_or_404(project_id)
        if not q.strip():
            _error(400, "empty_query", "query must be non-empty")
        try:
            vector = embed.embed_query(q, bundle.provider)
        except embed.EmbeddingError as exc:
            _error(503, "provider_unavailable", str(exc))
        hits = _rank_topics(bundle, vector, k)
        return with_entry(bundle, {"query": q, "hits": hits})

    def _rank_topics(bundle: ProjectBundle, vector: np.ndarray, k: int) -> list[dict]:
        hits = []
        for rep in bundle.topic_model.representations:
            centroid = rep.centroid
            denom = np.linalg.norm(vector) * np.linalg.norm(centroid)
            sim = float(vector @ centroid / denom) if denom > 0 else 0.0
            hits.append(
                {
                    "topic_id": rep.topic_id,
                    "similarity": sim,
                    "top_terms": [t for t, _ in rep.top_terms[:5]],
                }
            )
        hits.sort(key=lambda h: (-h["similarity"], h["topic_id"]))
        return hits[: max(k, 0)]

    @app.get("/projects/{project_id}/search/doi")
    def search_doi(project_id: str, doi: str = "", k: int = 10):
        bundle = bundle_or_404(project_id)
        if not resolve.is_valid_doi(doi):
            _error(400, "bad_doi", f"malformed DOI {doi!r}")
        try:
            record = resolve.resolve_chain(bundle.resolvers, doi)
        except resolve.ResolverError as exc:
            _error(502, "resolvers_failed", str(exc))
        if record is None:
            _error(404, "doi_unresolvable", f"no resolver knows {doi!r}")
        if not record.abstract or not record.title:
            _error(422, "empty_abstract", f"resolved record for {doi!r} lacks text")
        text = embed.embedding_input(record)
        try:
            vector = embed.embed_query(text, bundle.provider)
        except embed.EmbeddingError as exc:
            _error(503, "provider_unavailable", str(exc))
        hits = _rank_topics(bundle, vector, k)
        return with_entry(
            bundle,
            {"doi": doi, "resolved_title": record.title, "hits": hits},
        )

    @app.get("/projects/{project_id}/topics/{topic_id}/timeseries")
    def timeseries(project_id: str, topic_id: int, granularity: int = 12,
                   relative: bool = False):
        bundle = bundle_or_404(project_id)
        if granularity not in GRANULARITIES:
            _error(400, "bad_granularity", f"granularity must be one of {GRANULARITIES}")
        if topic_id != -1:
            rep_or_404(bundle, topic_id)
        series = bundle.series[granularity].get(topic_id)
        if series is None:
            _error(404, "unknown_topic", f"no series for topic {topic_id}")
        return with_entry(
            bundle,
            {
                "topic_id": topic_id,
                "granularity_months": granularity,
                "relative": relative,
                "bins": [
                    {
                        "bin_id": stat.bin_id,
                        "start_date": stat.start_date.isoformat(),
                        "value": stat.relative if relative else stat.count,
                        "count": stat.count,
                        "relative": stat.relative,
                        "rank": stat.rank,
                    }
                    for stat in series.bins
                ],
            },
        )

    @app.post("/projects/{project_id}/topics/{topic_id}/test")
    async def interval_test(project_id: str, topic_id: int, request: Request):
        bundle = bundle_or_404(project_id)
        if topic_id != -1:
            rep_or_404(bundle, topic_id)
        body = await request.json()
        granularity = int(body.get("granularity", 12))
        if granularity not in GRANULARITIES:
            _error(400, "bad_granularity", f"granularity must be one of {GRANULARITIES}")
        alpha = float(body.get("alpha", 0.05))
        use_relative = bool(body.get("use_relative", True))
        raw = body.get("intervals", [])
        try:
            intervals = [
                IntervalSpec(int(iv[0]), int(iv[1]))
                if isinstance(iv, (list, tuple))
                else IntervalSpec(int(iv["start_bin"]), int(iv["end_bin"]))
                for iv in raw
            ]
        except (ValueError, KeyError, TypeError) as exc:
            _error(400, "bad_intervals", f"cannot parse intervals: {exc}")
        series = bundle.series[granularity].get(topic_id)
        if series is None:
            _error(404, "unknown_topic", f"no series for topic {topic_id}")
        try:
            omnibus, pairwise = dynamics.compare_intervals(
                series, intervals, alpha=alpha, use_relative=use_relative
            )
        except ValueError as exc:
            _error(400, "bad_intervals", str(exc))
        return with_entry(
            bundle,
            {
                "topic_id": topic_id,
                "granularity_months": granularity,
                "omnibus": omnibus.to_json_dict(),
                "pairwise": pairwise.to_json_dict() if pairwise else None,
            },
        )

    @app.get("/projects/{project_id}/topics/{topic_id}/documents")
    def documents(project_id: str, topic_id: int, format: str = "csv"):
        bundle = bundle_or_404(project_id)
        rep = rep_or_404(bundle, topic_id)
        if format != "csv":
            _error(400, "bad_format", "only csv is supported")
        members = np.flatnonzero(bundle.labels == topic_id)

        def rows():
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow(["doi", "title", "pub_date", "probability"])
            yield buf.getvalue()
            for idx in members:
                buf.seek(0)
                buf.truncate(0)
                record = bundle.records[idx]
                prob = topics.assignment_probability(bundle.reduced[idx], rep)
                writer.writerow(
                    [
                        record.doi,
                        record.title,
                        record.pub_date.isoformat() if record.pub_date else "",
                        repr(prob),
                    ]
                )
                yield buf.getvalue()

        return StreamingResponse(
            rows(),
            media_type="text/csv",
            headers={
                "X-Serving-Entry": bundle.entry_id,
                "Content-Disposition": f"attachment; filename=topic_{topic_id}.csv",
            },
        )

    @app.get("/projects/{project_id}/map")
    def intertopic(project_id: str):
        bundle = bundle_or_404(project_id)
        reps = bundle.topic_model.representations
        if len(reps) < 2:
            _error(409, "too_few_topics", "intertopic map needs at least 2 topics")
        centroids = {r.topic_id: r.centroid for r in reps}
        sizes = {r.topic_id: r.size for r in reps}
        placed = topics.intertopic_map(centroids, sizes, seed=0)
        terms = {r.topic_id: [t for t, _ in r.top_terms[:5]] for r in reps}
        for item in placed:
            item["top_terms"] = terms[item["topic_id"]]
        return with_entry(bundle, {"topics": placed})

    static_dir = config.get("static_dir")
    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
