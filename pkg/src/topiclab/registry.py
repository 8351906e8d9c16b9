"""Best-model registry: checkpoints, portable serialization, trial log.

One directory per registered entry holds a manifest (configuration, score,
fingerprints, timestamp), an opaque checkpoint for exact resumption, and a
portable form (JSON structure plus binary arrays) sufficient to run
inference without re-fitting. Registration is append-only and guarded by a
lock; registered scores must strictly increase.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import pickle
import shutil
import threading
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse

from .density import ClusterConfig, FittedClusterer
from .manifold import FittedManifold, ManifoldConfig
from .topics import TopicModel, TopicRepresentation, Vocabulary

__all__ = ["RegistryEntry", "RegistryError", "ModelRegistry", "save_portable", "load_portable"]


class RegistryError(Exception):
    pass


@dataclass
class RegistryEntry:
    entry_id: str
    dbcv_score: float
    config: dict
    provider_fingerprint: str
    checkpoint_path: str
    portable_path: str
    created_at: str
    kind: str = "search"          # "search" during optimization, "serving" after the full fit
    n_topics: int = 0

    def to_json_dict(self) -> dict:
        return asdict(self)


def _atomic_write_json(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    os.replace(tmp, path)


def save_portable(
    directory: str,
    fitted_manifold: FittedManifold,
    fitted_clusterer: FittedClusterer,
    topic_model: TopicModel | None = None,
) -> None:
    """Inference-ready serialization: JSON structure plus an .npz of arrays."""
    os.makedirs(directory, exist_ok=True)
    arrays: dict[str, np.ndarray] = {
        "training_points": fitted_manifold.training_points,
        "training_layout": fitted_manifold.training_layout,
        "training_labels": fitted_clusterer.training_labels,
    }
    clusters = sorted(fitted_clusterer.exemplars)
    for label in clusters:
        arrays[f"exemplars_{label}"] = fitted_clusterer.exemplars[label]
        arrays[f"exemplar_indices_{label}"] = fitted_clusterer.exemplar_indices[label]
    structure: dict = {
        "manifold_config": asdict(fitted_manifold.config),
        "cluster_config": asdict(fitted_clusterer.config),
        "clusters": clusters,
        "death_lambda": {str(k): v for k, v in fitted_clusterer.death_lambda.items()},
        "stabilities": {str(k): v for k, v in fitted_clusterer.stabilities.items()},
    }
    if topic_model is not None:
        vocab = topic_model.vocabulary
        arrays["labels"] = topic_model.labels
        arrays["document_frequency"] = vocab.document_frequency
        coo = vocab.class_counts.tocoo()
        arrays["class_counts_row"] = coo.row
        arrays["class_counts_col"] = coo.col
        arrays["class_counts_val"] = coo.data
        for rep in topic_model.representations:
            arrays[f"centroid_{rep.topic_id}"] = rep.centroid
            arrays[f"reduced_centroid_{rep.topic_id}"] = rep.reduced_centroid
        structure["topic_model"] = {
            "document_ids": topic_model.document_ids,
            "provider_fingerprint": topic_model.provider_fingerprint,
            "config_fingerprint": topic_model.config_fingerprint,
            "terms": vocab.terms,
            "class_ids": vocab.class_ids,
            "class_counts_shape": list(vocab.class_counts.shape),
            "representations": [
                {
                    "topic_id": rep.topic_id,
                    "top_terms": [[t, w] for t, w in rep.top_terms],
                    "mmr_terms": [[t, w] for t, w in rep.mmr_terms],
                    "size": rep.size,
                    "mean_member_distance": rep.mean_member_distance,
                }
                for rep in topic_model.representations
            ],
        }
    np.savez_compressed(os.path.join(directory, "arrays.npz"), **arrays)
    _atomic_write_json(os.path.join(directory, "model.json"), structure)


def load_portable(directory: str) -> tuple[FittedManifold, FittedClusterer, TopicModel | None]:
    with open(os.path.join(directory, "model.json"), "r", encoding="utf-8") as fh:
        structure = json.load(fh)
    arrays = np.load(os.path.join(directory, "arrays.npz"), allow_pickle=False)
    mcfg = ManifoldConfig(**structure["manifold_config"])
    ccfg = ClusterConfig(**structure["cluster_config"])
    fitted_manifold = FittedManifold(
        training_points=arrays["training_points"],
        training_layout=arrays["training_layout"],
        config=mcfg,
    )
    clusters = [int(c) for c in structure["clusters"]]
    fitted_clusterer = FittedClusterer(
        config=ccfg,
        training_labels=arrays["training_labels"],
        exemplars={c: arrays[f"exemplars_{c}"] for c in clusters},
        exemplar_indices={c: arrays[f"exemplar_indices_{c}"] for c in clusters},
        death_lambda={int(k): float(v) for k, v in structure["death_lambda"].items()},
        stabilities={int(k): float(v) for k, v in structure["stabilities"].items()},
    )
    topic_model = None
    if "topic_model" in structure:
        tm = structure["topic_model"]
        terms = list(tm["terms"])
        shape = tuple(tm["class_counts_shape"])
        counts = scipy.sparse.csr_matrix(
            (
                arrays["class_counts_val"],
                (arrays["class_counts_row"], arrays["class_counts_col"]),
            ),
            shape=shape,
        )
        vocab = Vocabulary(
            terms=terms,
            term_index={t: i for i, t in enumerate(terms)},
            document_frequency=arrays["document_frequency"],
            class_counts=counts,
            class_ids=[int(c) for c in tm["class_ids"]],
        )
        representations = [
            TopicRepresentation(
                topic_id=int(rep["topic_id"]),
                top_terms=[(t, float(w)) for t, w in rep["top_terms"]],
                mmr_terms=[(t, float(w)) for t, w in rep["mmr_terms"]],
                size=int(rep["size"]),
                centroid=arrays[f"centroid_{rep['topic_id']}"],
                reduced_centroid=arrays[f"reduced_centroid_{rep['topic_id']}"],
                mean_member_distance=float(rep["mean_member_distance"]),
            )
            for rep in tm["representations"]
        ]
        topic_model = TopicModel(
            labels=arrays["labels"],
            representations=representations,
            vocabulary=vocab,
            document_ids=list(tm["document_ids"]),
            provider_fingerprint=tm["provider_fingerprint"],
            config_fingerprint=tm["config_fingerprint"],
        )
    return fitted_manifold, fitted_clusterer, topic_model


class ModelRegistry:
    """Filesystem registry of registered models for one project."""

    def __init__(self, root: str, registration_threshold: float = 0.30):
        self.root = root
        self.threshold = registration_threshold
        self._lock = threading.Lock()
        os.makedirs(os.path.join(root, "entries"), exist_ok=True)

    # -- entries -----------------------------------------------------------

    def entries(self, kind: str | None = None) -> list[RegistryEntry]:
        out = []
        entries_dir = os.path.join(self.root, "entries")
        for name in sorted(os.listdir(entries_dir)):
            manifest = os.path.join(entries_dir, name, "manifest.json")
            if os.path.exists(manifest):
                with open(manifest, "r", encoding="utf-8") as fh:
                    entry = RegistryEntry(**json.load(fh))
                if kind is None or entry.kind == kind:
                    out.append(entry)
        return out

    def best_entry(self, kind: str | None = None) -> RegistryEntry | None:
        entries = self.entries(kind)
        return max(entries, key=lambda e: e.dbcv_score) if entries else None

    def register(
        self,
        dbcv_score: float,
        config: dict,
        provider_fingerprint: str,
        checkpoint_state: dict,
        fitted_manifold: FittedManifold,
        fitted_clusterer: FittedClusterer,
        topic_model: TopicModel | None = None,
        kind: str = "search",
        n_topics: int = 0,
        enforce_improvement: bool = True,
    ) -> RegistryEntry:
        """Persist a model; search entries must beat the threshold and every
        previously registered score."""
        with self._lock:
            if kind == "search":
                if dbcv_score <= self.threshold:
                    raise RegistryError(
                        f"score {dbcv_score} does not exceed threshold {self.threshold}"
                    )
                if enforce_improvement:
                    best = self.best_entry("search")
                    if best is not None and dbcv_score <= best.dbcv_score:
                        raise RegistryError(
                            f"score {dbcv_score} does not improve on {best.dbcv_score}"
                        )
            taken = [int(e.entry_id.split("-", 1)[0]) for e in self.entries()]
            index = max(taken, default=-1) + 1
            entry_id = f"{index:04d}-{kind}"
            final_dir = os.path.join(self.root, "entries", entry_id)
            staging = final_dir + ".staging"
            if os.path.exists(staging):
                shutil.rmtree(staging)
            os.makedirs(staging)
            with open(os.path.join(staging, "checkpoint.pkl"), "wb") as fh:
                pickle.dump(checkpoint_state, fh)
            save_portable(
                os.path.join(staging, "portable"),
                fitted_manifold,
                fitted_clusterer,
                topic_model,
            )
            entry = RegistryEntry(
                entry_id=entry_id,
                dbcv_score=float(dbcv_score),
                config=config,
                provider_fingerprint=provider_fingerprint,
                checkpoint_path=os.path.join(final_dir, "checkpoint.pkl"),
                portable_path=os.path.join(final_dir, "portable"),
                created_at=dt.datetime.now(dt.timezone.utc).isoformat(),
                kind=kind,
                n_topics=n_topics,
            )
            _atomic_write_json(os.path.join(staging, "manifest.json"), entry.to_json_dict())
            os.replace(staging, final_dir)
            return entry

    def load(self, entry: RegistryEntry):
        return load_portable(entry.portable_path)

    def load_checkpoint(self, entry: RegistryEntry) -> dict:
        with open(entry.checkpoint_path, "rb") as fh:
            return pickle.load(fh)

    def prune(self) -> list[str]:
        """Remove all search entries except the best; returns removed ids."""
        with self._lock:
            entries = self.entries("search")
            if not entries:
                return []
            best = max(entries, key=lambda e: e.dbcv_score)
            removed = []
            for entry in entries:
                if entry.entry_id != best.entry_id:
                    shutil.rmtree(os.path.join(self.root, "entries", entry.entry_id))
                    removed.append(entry.entry_id)
            return removed

    # -- trial log ----------------------------------------------------------

    @property
    def trial_log_path(self) -> str:
        return os.path.join(self.root, "trial_log.jsonl")

    def append_trial(self, payload: dict) -> None:
        with open(self.trial_log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True))
            fh.write("\n")

    def read_trial_log(self) -> list[dict]:
        if not os.path.exists(self.trial_log_path):
            return []
        with open(self.trial_log_path, "r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
