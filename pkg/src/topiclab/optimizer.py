"""Random search over the reduction/clustering hyperparameter space.

Each trial draws one configuration from the parameter grid, reduces and
clusters a fixed validation subsample, and scores the result with the
density-based validity index. A trial that cannot produce a scoreable
clustering records a failure marker instead of raising, so the search
always spends its full budget. New strict maxima above the registration
threshold are persisted immediately; the final model is fitted on all
points with the best configuration.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import density, manifold, topics, validity
from .density import ClusterConfig, FittedClusterer
from .manifold import FittedManifold, ManifoldConfig
from .registry import ModelRegistry

__all__ = [
    "SearchSpace",
    "SampledConfig",
    "TrialResult",
    "OptimizerConfig",
    "OptimizerError",
    "FittedModel",
    "sample_config",
    "validation_subset",
    "run_trial",
    "random_search",
    "fit_final",
]


class OptimizerError(Exception):
    pass


def _grid(start: float, end: float, step: float, snap: int = 10) -> list[float]:
    values = []
    v = start
    while v < end or abs(v - end) < 10**-snap:
        values.append(round(v, snap))
        v += step
    if values[-1] != round(end, snap):
        values.append(round(end, snap))
    return values


@dataclass(frozen=True)
class SearchSpace:
    """Per-parameter grids; range ends are inclusive."""

    n_neighbors: tuple = (1, 100, 5)
    min_dist: tuple = (0.0, 1.0, 0.05)
    n_components: tuple = (5, 50, 5)
    min_samples: tuple = (10, 100, 10)
    min_cluster_size: tuple = (25, 100, 5)
    metrics: tuple = ("euclidean",)
    cluster_selection_methods: tuple = ("eom", "leaf")

    def grids(self) -> dict[str, list]:
        return {
            "n_neighbors": [int(v) for v in _grid(*self.n_neighbors)],
            "min_dist": _grid(*self.min_dist),
            "n_components": [int(v) for v in _grid(*self.n_components)],
            "min_samples": [int(v) for v in _grid(*self.min_samples)],
            "min_cluster_size": [int(v) for v in _grid(*self.min_cluster_size)],
            "metric": list(self.metrics),
            "cluster_selection_method": list(self.cluster_selection_methods),
        }


@dataclass(frozen=True)
class SampledConfig:
    """One raw draw from the grid; may violate a config invariant (for
    instance n_neighbors = 1), in which case the trial records a failure."""

    n_neighbors: int
    min_dist: float
    n_components: int
    metric: str
    min_samples: int
    min_cluster_size: int
    cluster_selection_method: str

    def manifold_config(self, seed: int, n_epochs: int | None = None) -> ManifoldConfig:
        return ManifoldConfig(
            n_neighbors=self.n_neighbors,
            min_dist=self.min_dist,
            n_components=self.n_components,
            metric=self.metric,
            n_epochs=n_epochs,
            seed=seed,
        )

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(
            min_samples=self.min_samples,
            min_cluster_size=self.min_cluster_size,
            cluster_selection_method=self.cluster_selection_method,
            metric=self.metric,
        )

    def to_dict(self) -> dict:
        return {
            "n_neighbors": self.n_neighbors,
            "min_dist": self.min_dist,
            "n_components": self.n_components,
            "metric": self.metric,
            "min_samples": self.min_samples,
            "min_cluster_size": self.min_cluster_size,
            "cluster_selection_method": self.cluster_selection_method,
        }


@dataclass
class TrialResult:
    trial_index: int
    config: SampledConfig
    dbcv_score: float | None          # None marks a failed trial
    n_topics: int = 0
    wall_time: float = 0.0
    error: str | None = None
    seed: int = 0

    @property
    def succeeded(self) -> bool:
        return self.dbcv_score is not None

    def comparable_score(self) -> float:
        return self.dbcv_score if self.dbcv_score is not None else float("-inf")

    def to_log_dict(self) -> dict:
        # wall time deliberately left out: the log must be reproducible
        # bit-for-bit from the seed
        return {
            "trial_index": self.trial_index,
            "config": self.config.to_dict(),
            "dbcv_score": self.dbcv_score,
            "n_topics": self.n_topics,
            "error": self.error,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 100
    validation_fraction: float = 0.20
    registration_threshold: float = 0.30
    seed: int = 0
    parallel: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not (0.0 < self.validation_fraction <= 1.0):
            raise ValueError("validation_fraction must be in (0, 1]")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass
class FittedModel:
    """Full-data fit used for serving."""

    manifold: FittedManifold
    clusterer: FittedClusterer
    labels: np.ndarray
    reduced: np.ndarray
    topic_model: topics.TopicModel | None = None
    dbcv_score: float | None = None
    config: SampledConfig | None = None


def sample_config(space: SearchSpace, rng: np.random.Generator) -> SampledConfig:
    """Uniform draw over the Cartesian grid."""
    grids = space.grids()

    def pick(name):
        values = grids[name]
        return values[int(rng.integers(len(values)))]

    return SampledConfig(
        n_neighbors=pick("n_neighbors"),
        min_dist=pick("min_dist"),
        n_components=pick("n_components"),
        metric=pick("metric"),
        min_samples=pick("min_samples"),
        min_cluster_size=pick("min_cluster_size"),
        cluster_selection_method=pick("cluster_selection_method"),
    )


def validation_subset(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """ceil(fraction * n) distinct indices, uniform without replacement."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    size = int(np.ceil(fraction * n))
    return np.sort(rng.choice(n, size=size, replace=False))


def run_trial(
    X_subset: np.ndarray, config: SampledConfig, trial_index: int = 0, seed: int = 0
) -> tuple[TrialResult, tuple[FittedManifold, FittedClusterer] | None]:
    """Reduce, cluster, and score one configuration on the subset.

    Degenerate outcomes (invalid configuration for the data, fewer than two
    scoreable clusters) are recorded as failures, never raised.
    """
    if X_subset.shape[0] == 0:
        raise ValueError("subset must be non-empty")
    started = time.monotonic()
    try:
        mcfg = config.manifold_config(seed=seed)
        ccfg = config.cluster_config()
        fitted_manifold, reduced = manifold.fit(X_subset, mcfg)
        labels, fitted_clusterer = density.fit(reduced, ccfg)
        report = validity.dbcv(reduced, labels)
    except (ValueError, RuntimeError, validity.ValidityError) as exc:
        return (
            TrialResult(
                trial_index=trial_index,
                config=config,
                dbcv_score=None,
                wall_time=time.monotonic() - started,
                error=str(exc),
                seed=seed,
            ),
            None,
        )
    n_topics = len(report.per_cluster_validity)
    result = TrialResult(
        trial_index=trial_index,
        config=config,
        dbcv_score=float(report.score),
        n_topics=n_topics,
        wall_time=time.monotonic() - started,
        seed=seed,
    )
    return result, (fitted_manifold, fitted_clusterer)


def random_search(
    X: np.ndarray,
    space: SearchSpace,
    opt_config: OptimizerConfig,
    registry: ModelRegistry | None = None,
    provider_fingerprint: str = "",
    trial_runner=None,
) -> TrialResult:
    """Run exactly ``steps`` trials and return the best one.

    A strict new maximum above the registration threshold is registered
    (checkpoint plus portable form) before the next trial is processed.
    ``trial_runner(index, config, seed)`` can replace the real trial for
    scripted sequences; it must return the same shape as :func:`run_trial`.
    """
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(opt_config.seed)
    subset_idx = validation_subset(X.shape[0], opt_config.validation_fraction, rng)
    X_subset = X[subset_idx]

    draws = []
    for step in range(opt_config.steps):
        cfg = sample_config(space, rng)
        seed = int(rng.integers(2**31 - 1))
        draws.append((step, cfg, seed))

    runner = trial_runner or (
        lambda step, cfg, seed: run_trial(X_subset, cfg, trial_index=step, seed=seed)
    )

    best: TrialResult | None = None

    def bookkeep(result: TrialResult, artifacts) -> None:
        # serialized in trial-index order so logs and registrations are
        # identical whether or not trials ran concurrently
        nonlocal best
        if registry is not None:
            registry.append_trial(result.to_log_dict())
        if not result.succeeded:
            return
        if best is not None and result.dbcv_score <= best.dbcv_score:
            return
        # strict new maximum
        if (
            registry is not None
            and artifacts is not None
            and result.dbcv_score > opt_config.registration_threshold
        ):
            fitted_manifold, fitted_clusterer = artifacts
            registry.register(
                dbcv_score=result.dbcv_score,
                config=result.config.to_dict(),
                provider_fingerprint=provider_fingerprint,
                checkpoint_state={
                    "trial_index": result.trial_index,
                    "seed": result.seed,
                    "subset_indices": subset_idx,
                    "manifold": fitted_manifold,
                    "clusterer": fitted_clusterer,
                },
                fitted_manifold=fitted_manifold,
                fitted_clusterer=fitted_clusterer,
                kind="search",
                n_topics=result.n_topics,
            )
        best = result

    if opt_config.parallel > 1:
        with ThreadPoolExecutor(max_workers=opt_config.parallel) as pool:
            futures = [pool.submit(runner, *draw) for draw in draws]
            for future in futures:
                bookkeep(*future.result())
    else:
        for draw in draws:
            bookkeep(*runner(*draw))

    if best is None:
        raise OptimizerError("no valid configuration found")
    return best


def fit_final(
    X: np.ndarray,
    best_config: SampledConfig,
    seed: int = 0,
    documents: list[str] | None = None,
    document_ids: list[str] | None = None,
    provider=None,
    provider_fingerprint: str = "",
    registry: ModelRegistry | None = None,
) -> FittedModel:
    """Fit the best configuration on all points and build the serving model.

    Builds topic representations when documents are supplied and registers
    the result as the project's serving model when a registry is given.
    """
    X = np.asarray(X, dtype=np.float64)
    mcfg = best_config.manifold_config(seed=seed)
    ccfg = best_config.cluster_config()
    fitted_manifold, reduced = manifold.fit(X, mcfg)
    labels, fitted_clusterer = density.fit(reduced, ccfg)
    if not fitted_clusterer.exemplars:
        raise OptimizerError("final clustering yields zero valid clusters")
    try:
        score = float(validity.dbcv(reduced, labels).score)
    except validity.ValidityError:
        score = None

    topic_model = None
    if documents is not None:
        ids = document_ids or [str(i) for i in range(len(documents))]
        topic_model = topics.build_topic_model(
            documents=documents,
            document_ids=ids,
            embeddings=X,
            reduced=reduced,
            labels=labels,
            provider=provider,
            provider_fingerprint=provider_fingerprint,
            config_fingerprint=json.dumps(best_config.to_dict(), sort_keys=True),
        )
    model = FittedModel(
        manifold=fitted_manifold,
        clusterer=fitted_clusterer,
        labels=labels,
        reduced=reduced,
        topic_model=topic_model,
        dbcv_score=score,
        config=best_config,
    )
    if registry is not None:
        registry.register(
            dbcv_score=score if score is not None else float("-inf"),
            config=best_config.to_dict(),
            provider_fingerprint=provider_fingerprint,
            checkpoint_state={"seed": seed, "manifold": fitted_manifold, "clusterer": fitted_clusterer},
            fitted_manifold=fitted_manifold,
            fitted_clusterer=fitted_clusterer,
            topic_model=topic_model,
            kind="serving",
            n_topics=len(fitted_clusterer.exemplars),
        )
    return model
