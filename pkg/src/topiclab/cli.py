"""Pipeline commands: every stage of the engine as one CLI verb.

Stages communicate through files in a pipeline directory and validate their
upstream artifacts by content fingerprint before running, so drift between
stages (a re-embedded corpus, a different provider) fails fast instead of
producing silently inconsistent models. Exit code 2 marks a missing
upstream artifact, 3 a fingerprint mismatch.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import sys

import click
import numpy as np

from . import corpus as corpus_mod
from . import dynamics, embed, fetching, optimizer, server
from .registry import ModelRegistry

EXIT_MISSING_ARTIFACT = 2
EXIT_FINGERPRINT_MISMATCH = 3


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _atomic_json(path: str, payload) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)


def _read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _require(path: str, hint: str) -> None:
    if not os.path.exists(path):
        click.echo(f"missing upstream artifact: {path} (run `{hint}` first)", err=True)
        sys.exit(EXIT_MISSING_ARTIFACT)


def _fingerprint_check(expected: str, actual: str, what: str) -> None:
    if expected != actual:
        click.echo(
            f"fingerprint mismatch for {what}: expected {expected[:12]}..., got {actual[:12]}...",
            err=True,
        )
        sys.exit(EXIT_FINGERPRINT_MISMATCH)


class Pipeline:
    """Paths and configuration for one pipeline directory."""

    def __init__(self, config_path: str):
        self.config = _read_json(config_path)
        base = os.path.dirname(os.path.abspath(config_path))
        self.root = os.path.join(base, self.config.get("pipeline_dir", "."))
        os.makedirs(self.root, exist_ok=True)

    def path(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    @property
    def window(self) -> tuple[dt.date, dt.date]:
        return (
            dt.date.fromisoformat(self.config.get("window_start", "2006-01-01")),
            dt.date.fromisoformat(self.config.get("window_end", "2023-12-31")),
        )

    @property
    def language(self) -> str:
        return self.config.get("language", "English")

    def provider(self) -> embed.EmbeddingProvider:
        return server.build_provider(self.config.get("provider", {"kind": "stub"}))

    def lock(self):
        return _Lock(self.path(".lock"))


class _Lock:
    def __init__(self, path: str):
        self.path = path

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            click.echo(
                f"pipeline locked by another command (remove {self.path} if stale)",
                err=True,
            )
            sys.exit(1)
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        if os.path.exists(self.path):
            os.remove(self.path)


@click.group()
@click.option("--config", "config_path", default="pipeline.json", show_default=True,
              help="Pipeline configuration JSON.")
@click.pass_context
def main(ctx, config_path):
    """Topic modeling pipeline."""
    ctx.obj = config_path


def _pipeline(ctx) -> Pipeline:
    config_path = ctx.obj
    if not os.path.exists(config_path):
        click.echo(f"missing config file {config_path}", err=True)
        sys.exit(EXIT_MISSING_ARTIFACT)
    return Pipeline(config_path)


@main.command()
@click.pass_context
def fetch(ctx):
    """Pull raw records from the configured source into raw.ndjson."""
    pipe = _pipeline(ctx)
    spec = pipe.config.get("fetch", {})
    kind = spec.get("kind", "file")
    if kind == "file":
        _require(spec["path"], "provide fetch.path")
        source = fetching.FileDocumentSource(spec["path"])
        query = ""
    else:
        client_config = fetching.ClientConfig(
            base_url=spec["base_url"],
            rate_limit=int(spec.get("rate_limit", 0)),
            max_retries=int(spec.get("max_retries", 3)),
        )
        source = fetching.HttpDocumentSource(client_config)
        q = pipe.config.get("query", {})
        query = corpus_mod.build_query(
            q["keywords"], q["year_start"], q["year_end"],
            q.get("language", pipe.language), q.get("pubstage", "final"),
        )
    cursor = fetching.Cursor.load(pipe.path("fetch_cursor.json"))
    out_path = pipe.path("raw.ndjson")
    errors_path = pipe.path("fetch_errors.jsonl")
    fetched = 0
    with pipe.lock():
        mode = "a" if cursor.position else "w"
        with open(out_path, mode, encoding="utf-8") as out, open(
            errors_path, "a", encoding="utf-8"
        ) as errs:
            try:
                for outcome in source.fetch(query, cursor):
                    if outcome.record is not None:
                        out.write(json.dumps(outcome.record.to_json_dict(), ensure_ascii=False))
                        out.write("\n")
                        fetched += 1
                    else:
                        errs.write(json.dumps({"id": outcome.identifier, "error": outcome.error}))
                        errs.write("\n")
            except fetching.QuotaExhausted as exc:
                click.echo(f"suspended: {exc}; cursor kept at {cursor.position}")
                return
    click.echo(f"fetched {fetched} records into {out_path}")


@main.command()
@click.pass_context
def clean(ctx):
    """Clean and deduplicate into corpus.ndjson (re-cleans its own output
    when it already exists, which is a no-op)."""
    pipe = _pipeline(ctx)
    corpus_path = pipe.path("corpus.ndjson")
    source = corpus_path if os.path.exists(corpus_path) else pipe.path("raw.ndjson")
    _require(source, "topiclab fetch")
    with pipe.lock():
        records = corpus_mod.read_ndjson(source)
        start, end = pipe.window
        kept, report = corpus_mod.clean(records, start, end, pipe.language)
        tmp = corpus_path + ".tmp"
        corpus_mod.write_ndjson(tmp, kept)
        os.replace(tmp, corpus_path)
        _atomic_json(
            pipe.path("corpus.meta.json"),
            {
                "report": report.to_json_dict(),
                "corpus_fingerprint": _sha256(corpus_path),
                "window_start": start.isoformat(),
                "window_end": end.isoformat(),
                "language": pipe.language,
            },
        )
    click.echo(json.dumps(report.to_json_dict()))


@main.command(name="embed")
@click.option("--batch-size", default=64, show_default=True)
@click.pass_context
def embed_cmd(ctx, batch_size):
    """Embed the cleaned corpus with the configured provider."""
    pipe = _pipeline(ctx)
    corpus_path = pipe.path("corpus.ndjson")
    _require(corpus_path, "topiclab clean")
    with pipe.lock():
        records = corpus_mod.read_ndjson(corpus_path)
        provider = pipe.provider()
        matrix = embed.embed_documents(records, provider, batch_size=batch_size)
        embed.save_embeddings(
            matrix,
            pipe.path("embeddings.bin"),
            pipe.path("embeddings.json"),
            extra={
                "corpus_fingerprint": _sha256(corpus_path),
                "provider_fingerprint": provider.fingerprint(),
            },
        )
    click.echo(f"embedded {len(matrix.row_ids)} documents at dim {matrix.dim}")


def _load_embeddings_checked(pipe: Pipeline):
    sidecar_path = pipe.path("embeddings.json")
    _require(pipe.path("embeddings.bin"), "topiclab embed")
    _require(sidecar_path, "topiclab embed")
    _require(pipe.path("corpus.ndjson"), "topiclab clean")
    matrix, sidecar = embed.load_embeddings(pipe.path("embeddings.bin"), sidecar_path)
    _fingerprint_check(
        sidecar.get("corpus_fingerprint", ""),
        _sha256(pipe.path("corpus.ndjson")),
        "corpus behind embeddings",
    )
    provider = pipe.provider()
    _fingerprint_check(
        sidecar.get("provider_fingerprint", ""),
        provider.fingerprint(),
        "embedding provider",
    )
    return matrix, sidecar, provider


def _search_space(pipe: Pipeline) -> optimizer.SearchSpace:
    overrides = pipe.config.get("search_space", {})
    kwargs = {}
    for key in ("n_neighbors", "min_dist", "n_components", "min_samples", "min_cluster_size"):
        if key in overrides:
            kwargs[key] = tuple(overrides[key])
    if "metrics" in overrides:
        kwargs["metrics"] = tuple(overrides["metrics"])
    if "cluster_selection_methods" in overrides:
        kwargs["cluster_selection_methods"] = tuple(overrides["cluster_selection_methods"])
    return optimizer.SearchSpace(**kwargs)


@main.command()
@click.option("--steps", default=None, type=int, help="Random search trials.")
@click.option("--validation-fraction", default=None, type=float)
@click.option("--threshold", default=None, type=float, help="Registration threshold.")
@click.option("--seed", default=None, type=int)
@click.option("--parallel", default=None, type=int)
@click.pass_context
def optimize(ctx, steps, validation_fraction, threshold, seed, parallel):
    """Random-search the reduction/clustering space on a validation subset."""
    pipe = _pipeline(ctx)
    matrix, _, provider = _load_embeddings_checked(pipe)
    defaults = pipe.config.get("optimizer", {})
    opt_config = optimizer.OptimizerConfig(
        steps=steps if steps is not None else int(defaults.get("steps", 100)),
        validation_fraction=(
            validation_fraction
            if validation_fraction is not None
            else float(defaults.get("validation_fraction", 0.20))
        ),
        registration_threshold=(
            threshold if threshold is not None else float(defaults.get("threshold", 0.30))
        ),
        seed=seed if seed is not None else int(defaults.get("seed", 0)),
        parallel=parallel if parallel is not None else int(defaults.get("parallel", 1)),
    )
    with pipe.lock():
        registry = ModelRegistry(
            pipe.path("registry"), registration_threshold=opt_config.registration_threshold
        )
        best = optimizer.random_search(
            matrix.values.astype(np.float64),
            _search_space(pipe),
            opt_config,
            registry=registry,
            provider_fingerprint=provider.fingerprint(),
        )
        _atomic_json(
            pipe.path("best_trial.json"),
            {
                "trial_index": best.trial_index,
                "config": best.config.to_dict(),
                "dbcv_score": best.dbcv_score,
                "n_topics": best.n_topics,
                "seed": best.seed,
                "optimizer": {
                    "steps": opt_config.steps,
                    "validation_fraction": opt_config.validation_fraction,
                    "threshold": opt_config.registration_threshold,
                    "seed": opt_config.seed,
                },
            },
        )
    click.echo(
        f"best trial {best.trial_index}: dbcv={best.dbcv_score:.4f} topics={best.n_topics}"
    )


@main.command()
@click.pass_context
def fit(ctx):
    """Fit the best configuration on the full corpus and register it for serving."""
    pipe = _pipeline(ctx)
    best_path = pipe.path("best_trial.json")
    _require(best_path, "topiclab optimize")
    matrix, _, provider = _load_embeddings_checked(pipe)
    best = _read_json(best_path)
    config = optimizer.SampledConfig(**best["config"])
    records = corpus_mod.read_ndjson(pipe.path("corpus.ndjson"))
    with pipe.lock():
        registry = ModelRegistry(pipe.path("registry"))
        model = optimizer.fit_final(
            matrix.values.astype(np.float64),
            config,
            seed=int(best.get("seed", 0)),
            documents=[embed.embedding_input(r) for r in records],
            document_ids=matrix.row_ids,
            provider=provider,
            provider_fingerprint=provider.fingerprint(),
            registry=registry,
        )
        _atomic_json(
            pipe.path("project.json"),
            {
                "topic_count": len(model.clusterer.exemplars),
                "document_count": len(records),
                "dbcv_score": model.dbcv_score,
                "noise_fraction": float((model.labels == -1).mean()),
            },
        )
    click.echo(
        f"serving model: {len(model.clusterer.exemplars)} topics, "
        f"dbcv={model.dbcv_score if model.dbcv_score is not None else float('nan'):.4f}"
    )


@main.command()
@click.option("--top-k", default=10, show_default=True)
@click.option("--mmr-lambda", default=0.7, show_default=True)
@click.pass_context
def represent(ctx, top_k, mmr_lambda):
    """Rebuild topic representations on the serving model."""
    from . import topics as topics_mod

    pipe = _pipeline(ctx)
    matrix, _, provider = _load_embeddings_checked(pipe)
    records = corpus_mod.read_ndjson(pipe.path("corpus.ndjson"))
    with pipe.lock():
        registry = ModelRegistry(pipe.path("registry"))
        entry = registry.best_entry("serving")
        if entry is None:
            click.echo("no serving model; run `topiclab fit` first", err=True)
            sys.exit(EXIT_MISSING_ARTIFACT)
        fitted_manifold, fitted_clusterer, _ = registry.load(entry)
        topic_model = topics_mod.build_topic_model(
            documents=[embed.embedding_input(r) for r in records],
            document_ids=matrix.row_ids,
            embeddings=matrix.values.astype(np.float64),
            reduced=fitted_manifold.training_layout,
            labels=fitted_clusterer.training_labels,
            provider=provider,
            top_k=top_k,
            mmr_lambda=mmr_lambda,
            provider_fingerprint=provider.fingerprint(),
            config_fingerprint=json.dumps(entry.config, sort_keys=True),
        )
        registry.register(
            dbcv_score=entry.dbcv_score,
            config=entry.config,
            provider_fingerprint=provider.fingerprint(),
            checkpoint_state={"rebuilt_from": entry.entry_id},
            fitted_manifold=fitted_manifold,
            fitted_clusterer=fitted_clusterer,
            topic_model=topic_model,
            kind="serving",
            n_topics=topic_model.n_topics,
        )
    click.echo(f"representations rebuilt for {topic_model.n_topics} topics")


@main.command()
@click.pass_context
def timeseries(ctx):
    """Precompute per-topic series for every granularity."""
    pipe = _pipeline(ctx)
    _require(pipe.path("corpus.ndjson"), "topiclab clean")
    with pipe.lock():
        registry = ModelRegistry(pipe.path("registry"))
        entry = registry.best_entry("serving")
        if entry is None:
            click.echo("no serving model; run `topiclab fit` first", err=True)
            sys.exit(EXIT_MISSING_ARTIFACT)
        _, fitted_clusterer, _ = registry.load(entry)
        records = corpus_mod.read_ndjson(pipe.path("corpus.ndjson"))
        labels = fitted_clusterer.training_labels
        if len(records) != len(labels):
            click.echo(
                f"serving model covers {len(labels)} documents but the corpus has "
                f"{len(records)}; re-run fit",
                err=True,
            )
            sys.exit(EXIT_FINGERPRINT_MISMATCH)
        start, end = pipe.window
        dates = [r.pub_date for r in records]
        series_dir = pipe.path("series")
        os.makedirs(series_dir, exist_ok=True)
        for granularity in dynamics.GRANULARITIES:
            series = dynamics.bin_documents(dates, labels, granularity, start, end)
            dynamics.relative_and_rank(series)
            dynamics.save_series_csv(
                os.path.join(series_dir, f"g{granularity}.csv"), series
            )
        _atomic_json(
            os.path.join(series_dir, "index.json"),
            {
                "granularities": list(dynamics.GRANULARITIES),
                "window_start": start.isoformat(),
                "window_end": end.isoformat(),
                "model_entry": entry.entry_id,
            },
        )
    click.echo(f"series written for granularities {dynamics.GRANULARITIES}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Serve the exploration API over the registered model."""
    import uvicorn

    pipe = _pipeline(ctx)
    app = server.create_app(_server_config(pipe))
    uvicorn.run(app, host=host, port=port)


def _server_config(pipe: Pipeline) -> dict:
    project = {
        "id": pipe.config.get("project_id", "default"),
        "name": pipe.config.get("project_name", pipe.config.get("project_id", "default")),
        "pipeline_dir": pipe.root,
        "provider": pipe.config.get("provider", {"kind": "stub"}),
        "resolvers": pipe.config.get("resolvers", []),
    }
    return {"projects": [project], "static_dir": pipe.config.get("static_dir")}


@main.command(name="prune-registry")
@click.pass_context
def prune_registry(ctx):
    """Drop all registered search models except the best one."""
    pipe = _pipeline(ctx)
    with pipe.lock():
        removed = ModelRegistry(pipe.path("registry")).prune()
    click.echo(f"removed {len(removed)} entries")


@main.command()
@click.pass_context
def report(ctx):
    """Emit corpus statistics and the trial-log summary as JSON."""
    pipe = _pipeline(ctx)
    _require(pipe.path("corpus.ndjson"), "topiclab clean")
    records = corpus_mod.read_ndjson(pipe.path("corpus.ndjson"))
    stats = corpus_mod.corpus_stats(records)
    _atomic_json(pipe.path("stats.json"), stats.to_json_dict())
    registry = ModelRegistry(pipe.path("registry"))
    trials = registry.read_trial_log()
    best_so_far = []
    best = float("-inf")
    for t in trials:
        score = t.get("dbcv_score")
        if score is not None and score > best:
            best = score
        best_so_far.append(None if best == float("-inf") else best)
    _atomic_json(
        pipe.path("trials_summary.json"),
        {
            "n_trials": len(trials),
            "n_failures": sum(1 for t in trials if t.get("dbcv_score") is None),
            "scores": [t.get("dbcv_score") for t in trials],
            "best_so_far": best_so_far,
        },
    )
    click.echo("wrote stats.json and trials_summary.json")


if __name__ == "__main__":
    main()
