"""Interpretable topic representations from cluster labels.

Vocabulary building, class-based TF-IDF weighting, greedy
relevance/redundancy keyword selection, centroids, the per-document
assignment-probability proxy, and the exports behind word clouds and the
intertopic map.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import manifold as _manifold

__all__ = [
    "Vocabulary",
    "TopicRepresentation",
    "TopicModel",
    "count_vectorize",
    "class_tf_idf",
    "top_terms",
    "mmr_diversify",
    "topic_centroids",
    "assignment_probability",
    "wordcloud_export",
    "intertopic_map",
    "build_topic_model",
]

_TOKEN_RE = re.compile(r"[^\W_]{2,}", re.UNICODE)
_SCALE_FLOOR = 1e-12

# defaults for the representation tuning
DEFAULT_TOP_K = 10
DEFAULT_MMR_LAMBDA = 0.7
DEFAULT_CANDIDATE_POOL = 30


@dataclass
class Vocabulary:
    terms: list[str]                          # column index -> term
    term_index: dict[str, int]
    document_frequency: np.ndarray            # per-term doc counts
    class_counts: scipy.sparse.csr_matrix     # classes x terms
    class_ids: list[int]                      # row index -> topic label

    @property
    def size(self) -> int:
        return len(self.terms)


@dataclass
class TopicRepresentation:
    topic_id: int
    top_terms: list[tuple[str, float]]
    mmr_terms: list[tuple[str, float]]
    size: int
    centroid: np.ndarray
    reduced_centroid: np.ndarray
    mean_member_distance: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "top_terms": [[t, w] for t, w in self.top_terms],
            "mmr_terms": [[t, w] for t, w in self.mmr_terms],
            "size": self.size,
            "centroid": self.centroid.tolist(),
            "reduced_centroid": self.reduced_centroid.tolist(),
            "mean_member_distance": self.mean_member_distance,
        }


@dataclass
class TopicModel:
    labels: np.ndarray
    representations: list[TopicRepresentation]
    vocabulary: Vocabulary
    document_ids: list[str]
    provider_fingerprint: str = ""
    config_fingerprint: str = ""

    @property
    def n_topics(self) -> int:
        return len(self.representations)

    def representation(self, topic_id: int) -> TopicRepresentation:
        for rep in self.representations:
            if rep.topic_id == topic_id:
                return rep
        raise KeyError(f"unknown topic {topic_id}")


def tokenize(text: str) -> list[str]:
    """Lowercased maximal letter-or-digit runs of length >= 2."""
    return _TOKEN_RE.findall(text.lower())


def count_vectorize(documents: list[str], labels=None) -> Vocabulary:
    """Build the vocabulary and per-class term counts.

    Classes are the non-noise labels; with no labels given, all documents
    form a single class 0.
    """
    if not documents:
        raise ValueError("documents must not be empty")
    if labels is None:
        labels = [0] * len(documents)
    labels = [int(l) for l in labels]
    if len(labels) != len(documents):
        raise ValueError("labels must align with documents")

    term_index: dict[str, int] = {}
    doc_freq: dict[int, int] = {}
    class_ids = sorted({l for l in labels if l >= 0})
    class_row = {c: r for r, c in enumerate(class_ids)}
    rows, cols, vals = [], [], []
    for doc, label in zip(documents, labels):
        counts: dict[int, int] = {}
        for tok in tokenize(doc):
            idx = term_index.setdefault(tok, len(term_index))
            counts[idx] = counts.get(idx, 0) + 1
        for idx in counts:
            doc_freq[idx] = doc_freq.get(idx, 0) + 1
        if label >= 0:
            r = class_row[label]
            for idx, cnt in counts.items():
                rows.append(r)
                cols.append(idx)
                vals.append(cnt)
    terms = [""] * len(term_index)
    for t, i in term_index.items():
        terms[i] = t
    matrix = scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(len(class_ids), len(terms)), dtype=np.float64
    )
    matrix.sum_duplicates()
    df = np.zeros(len(terms))
    for idx, cnt in doc_freq.items():
        df[idx] = cnt
    return Vocabulary(
        terms=terms,
        term_index=term_index,
        document_frequency=df,
        class_counts=matrix,
        class_ids=class_ids,
    )


def class_tf_idf(
    class_counts: scipy.sparse.csr_matrix, reduce_frequent_words: bool = True
) -> np.ndarray:
    """Class-based TF-IDF weights.

    tf(t,c) is the in-class normalized frequency, square-rooted when
    reduce_frequent_words is set; idf(t) = log(1 + A / f(t)) with A the mean
    class total and f(t) the term's count across classes. Empty classes get
    all-zero rows.
    """
    counts = scipy.sparse.csr_matrix(class_counts, dtype=np.float64)
    if counts.shape[0] < 1:
        raise ValueError("need at least one class")
    totals = np.asarray(counts.sum(axis=1)).ravel()
    tf = counts.toarray()
    nonzero = totals > 0
    tf[nonzero] = tf[nonzero] / totals[nonzero, None]
    tf[~nonzero] = 0.0
    if reduce_frequent_words:
        tf = np.sqrt(tf)
    f = np.asarray(counts.sum(axis=0)).ravel()
    a = totals.mean()
    with np.errstate(divide="ignore"):
        idf = np.log(1.0 + np.where(f > 0, a / f, 0.0))
    idf[f == 0] = 0.0
    return tf * idf


def top_terms(
    weights: np.ndarray, vocabulary: Vocabulary, k: int
) -> list[list[tuple[str, float]]]:
    """Per class, the k heaviest terms; equal weights order alphabetically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = []
    for row in np.atleast_2d(weights):
        pairs = [
            (vocabulary.terms[i], float(w)) for i, w in enumerate(row) if w > 0.0
        ]
        pairs.sort(key=lambda p: (-p[1], p[0]))
        out.append(pairs[:k])
    return out


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < _SCALE_FLOOR or nv < _SCALE_FLOOR:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def mmr_diversify(
    candidates: list[str],
    candidate_vectors: np.ndarray,
    topic_vector: np.ndarray,
    lam: float,
    k: int,
) -> list[str]:
    """Greedy relevance-vs-redundancy selection.

    Step score is lam * cos(candidate, topic) - (1 - lam) * max cosine to the
    already-selected; the first pick is pure relevance. Ties keep candidate
    order.
    """
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must be in [0, 1]")
    if k > len(candidates):
        raise ValueError(f"k={k} exceeds {len(candidates)} candidates")
    vectors = np.asarray(candidate_vectors, dtype=np.float64)
    relevance = [_cosine(vectors[i], topic_vector) for i in range(len(candidates))]
    selected: list[int] = []
    remaining = list(range(len(candidates)))
    while len(selected) < k:
        best_idx, best_score = None, -math.inf
        for i in remaining:
            if selected:
                redundancy = max(_cosine(vectors[i], vectors[j]) for j in selected)
                score = lam * relevance[i] - (1.0 - lam) * redundancy
            else:
                score = relevance[i]
            if score > best_score:
                best_idx, best_score = i, score
        selected.append(best_idx)
        remaining.remove(best_idx)
    return [candidates[i] for i in selected]


def topic_centroids(
    embeddings: np.ndarray, reduced: np.ndarray, labels: np.ndarray
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Arithmetic mean member vectors per topic, in both spaces; noise excluded."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    reduced = np.asarray(reduced, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not (len(embeddings) == len(reduced) == len(labels)):
        raise ValueError("embeddings, reduced, labels must align")
    out = {}
    for c in sorted(set(labels.tolist())):
        if c < 0:
            continue
        members = labels == c
        if not members.any():
            raise ValueError(f"topic {c} has no members")
        out[int(c)] = (embeddings[members].mean(axis=0), reduced[members].mean(axis=0))
    return out


def assignment_probability(
    document_reduced_point: np.ndarray, representation: TopicRepresentation
) -> float:
    """Proxy in [0, 1]: exp(-d / s), d the distance to the topic's reduced
    centroid, s the topic's mean member-to-centroid distance."""
    d = float(
        np.linalg.norm(
            np.asarray(document_reduced_point, dtype=np.float64)
            - representation.reduced_centroid
        )
    )
    s = max(representation.mean_member_distance, _SCALE_FLOOR)
    return math.exp(-d / s)


def wordcloud_export(representation: TopicRepresentation, k: int) -> list[tuple[str, float]]:
    """Top-k weighted terms rescaled so the heaviest is exactly 1."""
    pairs = representation.top_terms[:k]
    if not pairs:
        return []
    peak = pairs[0][1]
    if peak <= 0:
        return [(t, 0.0) for t, _ in pairs]
    return [(t, w / peak) for t, w in pairs]


def intertopic_map(
    centroids: dict[int, np.ndarray], sizes: dict[int, int], seed: int = 0
) -> list[dict]:
    """Project topic centroids to 2-D for the distance map.

    Uses the manifold reducer with n_neighbors = min(15, T-1); the 2-topic
    case degenerates to a direct distance-preserving placement.
    """
    topic_ids = sorted(centroids)
    t = len(topic_ids)
    if t < 2:
        raise ValueError("intertopic map needs at least 2 topics")
    matrix = np.vstack([centroids[c] for c in topic_ids])
    if t == 2:
        gap = float(np.linalg.norm(matrix[0] - matrix[1]))
        coords = np.array([[0.0, 0.0], [gap, 0.0]])
    else:
        cfg = _manifold.ManifoldConfig(
            n_neighbors=min(15, t - 1), min_dist=0.1, n_components=2, seed=seed
        )
        _, coords = _manifold.fit(matrix, cfg)
    return [
        {
            "topic_id": c,
            "x": float(coords[i, 0]),
            "y": float(coords[i, 1]),
            "size": int(sizes[c]),
        }
        for i, c in enumerate(topic_ids)
    ]


def build_topic_model(
    documents: list[str],
    document_ids: list[str],
    embeddings: np.ndarray,
    reduced: np.ndarray,
    labels: np.ndarray,
    provider=None,
    top_k: int = DEFAULT_TOP_K,
    mmr_lambda: float = DEFAULT_MMR_LAMBDA,
    candidate_pool: int = DEFAULT_CANDIDATE_POOL,
    reduce_frequent_words: bool = True,
    stopwords: set[str] | None = None,
    provider_fingerprint: str = "",
    config_fingerprint: str = "",
) -> TopicModel:
    """Assemble the full topic model for a labeled corpus.

    Term vectors for the redundancy criterion come from the embedding
    provider applied to single terms; without a provider the diversified
    list falls back to the plain weight ranking.
    """
    labels = np.asarray(labels, dtype=np.int64)
    vocab = count_vectorize(documents, labels)
    if stopwords:
        keep = [i for i, t in enumerate(vocab.terms) if t not in stopwords]
        vocab = Vocabulary(
            terms=[vocab.terms[i] for i in keep],
            term_index={vocab.terms[i]: j for j, i in enumerate(keep)},
            document_frequency=vocab.document_frequency[keep],
            class_counts=vocab.class_counts[:, keep],
            class_ids=vocab.class_ids,
        )
    weights = (
        class_tf_idf(vocab.class_counts, reduce_frequent_words)
        if vocab.class_ids
        else np.zeros((0, vocab.size))
    )
    ranked = top_terms(weights, vocab, max(top_k, candidate_pool)) if vocab.class_ids else []
    centroids = topic_centroids(embeddings, reduced, labels)

    representations = []
    for row, topic_id in enumerate(vocab.class_ids):
        centroid, reduced_centroid = centroids[topic_id]
        members = labels == topic_id
        mean_dist = float(
            np.linalg.norm(
                np.asarray(reduced)[members] - reduced_centroid, axis=1
            ).mean()
        )
        terms = ranked[row]
        if provider is not None and terms:
            names = [t for t, _ in terms]
            vectors = provider.embed_batch(names)
            k = min(top_k, len(names))
            chosen = mmr_diversify(names, vectors, centroid, mmr_lambda, k)
            rel = {t: _cosine(vectors[i], centroid) for i, t in enumerate(names)}
            mmr_pairs = [(t, rel[t]) for t in chosen]
        else:
            mmr_pairs = [(t, w) for t, w in terms[:top_k]]
        representations.append(
            TopicRepresentation(
                topic_id=topic_id,
                top_terms=terms[:max(top_k, candidate_pool)],
                mmr_terms=mmr_pairs,
                size=int(members.sum()),
                centroid=centroid,
                reduced_centroid=reduced_centroid,
                mean_member_distance=mean_dist,
            )
        )
    return TopicModel(
        labels=labels,
        representations=representations,
        vocabulary=vocab,
        document_ids=list(document_ids),
        provider_fingerprint=provider_fingerprint,
        config_fingerprint=config_fingerprint,
    )
