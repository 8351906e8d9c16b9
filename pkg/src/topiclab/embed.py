"""Document and query embedding through a pluggable provider.

The engine only assumes a provider maps a batch of texts to equal-length
real vectors. Two providers ship: a remote JSON-over-HTTP client and a
deterministic stub that hashes character n-grams into a fixed number of
buckets, which keeps the whole pipeline and test suite offline while still
giving vocabulary-sharing texts higher cosine similarity.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx
import numpy as np

from .corpus import DocumentRecord

__all__ = [
    "EmbeddingMatrix",
    "EmbeddingError",
    "EmbeddingProvider",
    "ProviderConfig",
    "StubProvider",
    "RemoteProvider",
    "build_provider",
    "embedding_input",
    "embed_documents",
    "embed_query",
    "save_embeddings",
    "load_embeddings",
]


class EmbeddingError(Exception):
    """Provider failure; carries the record index range of the failed batch."""

    def __init__(self, message: str, start: int = -1, end: int = -1):
        super().__init__(message)
        self.start = start
        self.end = end


@dataclass
class EmbeddingMatrix:
    """Dense document-vector matrix with row-aligned document identifiers."""

    values: np.ndarray          # (n_documents, dim) float32
    row_ids: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if len(self.row_ids) != self.values.shape[0]:
            raise ValueError("row_ids length must equal row count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding matrix contains non-finite entries")


class EmbeddingProvider(Protocol):
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...

    def fingerprint(self) -> str: ...


@dataclass(frozen=True)
class ProviderConfig:
    """Declarative provider selection, as it appears in pipeline configs."""

    kind: str = "stub"                 # "stub" or "remote"
    endpoint: str = ""                 # remote only
    batch_size: int = 64
    normalize: bool = True
    dim: int = 32
    seed: int = 0                      # stub only

    def __post_init__(self):
        if self.kind not in ("stub", "remote"):
            raise ValueError(f"unknown provider kind: {self.kind}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote provider needs an endpoint")

    @classmethod
    def from_dict(cls, raw: dict) -> "ProviderConfig":
        known = {f: raw[f] for f in
                 ("kind", "endpoint", "batch_size", "normalize", "dim", "seed")
                 if f in raw}
        return cls(**known)


def build_provider(config: ProviderConfig | dict) -> "EmbeddingProvider":
    if isinstance(config, dict):
        config = ProviderConfig.from_dict(config)
    if config.kind == "stub":
        return StubProvider(dim=config.dim, seed=config.seed)
    return RemoteProvider(endpoint=config.endpoint, dim=config.dim)


class StubProvider:
    """Deterministic offline provider.

    Each text is decomposed into character trigrams of its lowercased,
    boundary-padded words; every trigram is hashed with a seeded keyed hash
    onto one of ``dim`` buckets with a +/-1 sign, and the accumulated vector
    is L2-normalized. A pure function of (text, seed, dim).
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self._key = struct.pack("<q", seed)

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for word in text.lower().split():
            padded = f" {word} "
            for i in range(len(padded) - 2):
                gram = padded[i : i + 3].encode("utf-8")
                digest = hashlib.blake2b(gram, digest_size=8, key=self._key).digest()
                h = int.from_bytes(digest, "little")
                bucket = h % self.dim
                sign = 1.0 if (h >> 63) & 1 else -1.0
                vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec.astype(np.float32)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts]) if texts else np.zeros((0, self.dim), np.float32)

    def fingerprint(self) -> str:
        return f"stub:dim={self.dim}:seed={self.seed}"


class RemoteProvider:
    """JSON-over-HTTP provider: POST {"inputs": [...]} -> {"embeddings": [...]}."""

    def __init__(
        self,
        endpoint: str,
        dim: int,
        max_retries: int = 2,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.dim = dim
        self.max_retries = max_retries
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        last_error: Exception | None = None
        for _ in range(self.max_retries + 1):
            try:
                resp = self._client.post(self.endpoint, json={"inputs": list(texts)})
                resp.raise_for_status()
                rows = resp.json()["embeddings"]
                arr = np.asarray(rows, dtype=np.float32)
                if arr.shape != (len(texts), self.dim):
                    raise EmbeddingError(
                        f"provider returned shape {arr.shape}, expected {(len(texts), self.dim)}"
                    )
                return arr
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = exc
        raise EmbeddingError(f"remote provider failed after retries: {last_error}")

    def fingerprint(self) -> str:
        return f"remote:endpoint={self.endpoint}:dim={self.dim}"

    def close(self) -> None:
        self._client.close()


def embedding_input(record: DocumentRecord) -> str:
    """Text fed to the provider: title, one newline, abstract."""
    if not record.title or not record.abstract:
        raise ValueError("record must have non-empty title and abstract")
    return f"{record.title}\n{record.abstract}"


def _chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def embed_documents(
    records: Sequence[DocumentRecord],
    provider: EmbeddingProvider,
    batch_size: int = 32,
    normalize: bool = True,
    max_in_flight: int = 1,
) -> EmbeddingMatrix:
    """Embed records in input order, processing them in batches.

    With ``max_in_flight`` > 1 batches are dispatched concurrently; assembly
    preserves input order regardless. A failed batch aborts the operation
    with the index range it covered.
    """
    if not records:
        raise ValueError("records must not be empty")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    texts = [embedding_input(r) for r in records]
    spans = _chunks(len(texts), batch_size)

    def run(span: tuple[int, int]) -> np.ndarray:
        start, end = span
        try:
            return provider.embed_batch(texts[start:end])
        except EmbeddingError as exc:
            raise EmbeddingError(str(exc), start=start, end=end) from exc

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    values = np.vstack(parts)
    if normalize:
        norms = np.linalg.norm(values, axis=1, keepdims=True)
        values = values / np.maximum(norms, 1e-12)
    row_ids = [r.doi or r.source_id or str(i) for i, r in enumerate(records)]
    return EmbeddingMatrix(values=values, row_ids=row_ids)


def embed_query(text: str, provider: EmbeddingProvider, normalize: bool = True) -> np.ndarray:
    """Embed one search string with the corpus provider."""
    if not text or not text.strip():
        raise ValueError("query text must not be empty")
    row = provider.embed_batch([text])[0].astype(np.float32)
    if normalize:
        norm = np.linalg.norm(row)
        if norm > 0:
            row = row / norm
    return row


def save_embeddings(matrix: EmbeddingMatrix, bin_path, sidecar_path, extra: dict | None = None) -> None:
    """Write little-endian float32 row-major values plus a JSON sidecar.

    Both files go through a temp-then-rename so an interrupted write never
    leaves a truncated artifact behind.
    """
    import os

    values = np.ascontiguousarray(matrix.values, dtype="<f4")
    tmp_bin = str(bin_path) + ".tmp"
    with open(tmp_bin, "wb") as fh:
        fh.write(values.tobytes(order="C"))
    os.replace(tmp_bin, bin_path)
    sidecar = {
        "dim": matrix.dim,
        "count": len(matrix.row_ids),
        "row_ids": matrix.row_ids,
        "dtype": "float32-le",
        "order": "row-major",
    }
    if extra:
        sidecar.update(extra)
    tmp_sidecar = str(sidecar_path) + ".tmp"
    with open(tmp_sidecar, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
    os.replace(tmp_sidecar, sidecar_path)


def load_embeddings(bin_path, sidecar_path) -> tuple[EmbeddingMatrix, dict]:
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    dim, count = int(sidecar["dim"]), int(sidecar["count"])
    raw = np.fromfile(bin_path, dtype="<f4")
    if raw.size != dim * count:
        raise ValueError(f"embedding file holds {raw.size} floats, expected {dim * count}")
    matrix = EmbeddingMatrix(values=raw.reshape(count, dim), row_ids=list(sidecar["row_ids"]))
    return matrix, sidecar
