"""Source-API document fetching with rate limiting, retries, and resume.

Two interchangeable sources implement :class:`DocumentSource`: an HTTP client
that talks to a search endpoint (document ids) and a retrieval endpoint (one
document per id), and a file-backed source used to run the pipeline and the
test suite fully offline. Progress is persisted to a cursor file after every
record so an interrupted fetch resumes where it stopped; one fetcher per
cursor file.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Iterator, Protocol

import httpx

from .corpus import DocumentRecord

__all__ = [
    "ClientConfig",
    "FetchOutcome",
    "DocumentSource",
    "HttpDocumentSource",
    "FileDocumentSource",
    "Cursor",
    "QuotaExhausted",
]

API_KEY_ENV = "TOPICLAB_API_KEY"


class QuotaExhausted(Exception):
    """Raised when the source reports the request quota is spent."""


@dataclass
class ClientConfig:
    base_url: str
    api_key: str = ""
    rate_limit: int = 0          # max requests per window; 0 disables
    rate_window: float = 1.0     # seconds
    max_retries: int = 3
    backoff: float = 0.1         # base delay, doubles per retry
    page_size: int = 25
    timeout: float = 30.0

    def resolved_api_key(self) -> str:
        return self.api_key or os.environ.get(API_KEY_ENV, "")


@dataclass
class FetchOutcome:
    """One per-identifier result: a record, or the error that replaced it."""

    identifier: str
    record: DocumentRecord | None = None
    error: str | None = None
    retries: int = 0


@dataclass
class Cursor:
    """Resumable fetch position, persisted as JSON after each record."""

    path: str
    position: int = 0
    identifiers: list[str] = field(default_factory=list)

    @classmethod
    def load(cls, path: str) -> "Cursor":
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            return cls(
                path=path,
                position=int(data.get("position", 0)),
                identifiers=list(data.get("identifiers", [])),
            )
        return cls(path=path)

    def save(self) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"position": self.position, "identifiers": self.identifiers}, fh)
        os.replace(tmp, self.path)


class DocumentSource(Protocol):
    def fetch(self, query: str, cursor: Cursor) -> Iterator[FetchOutcome]:
        """Yield one outcome per identifier, persisting the cursor as it goes."""
        ...


class _RateLimiter:
    def __init__(self, limit: int, window: float, sleep=time.sleep):
        self.limit = limit
        self.window = window
        self._stamps: list[float] = []
        self._sleep = sleep

    def wait(self) -> None:
        if self.limit <= 0:
            return
        now = time.monotonic()
        self._stamps = [t for t in self._stamps if now - t < self.window]
        if len(self._stamps) >= self.limit:
            self._sleep(self.window - (now - self._stamps[0]))
            self._stamps = self._stamps[1:]
        self._stamps.append(time.monotonic())


class HttpDocumentSource:
    """HTTP source: GET {base}/search for ids, GET {base}/document/{id} each.

    The API key travels in the ``apiKey`` header. HTTP 429 with an exhausted
    retry budget, or a payload flagging ``quota_exceeded``, suspends the
    stream via :class:`QuotaExhausted`; the persisted cursor lets a later
    call continue from the same position.
    """

    def __init__(self, config: ClientConfig, transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep):
        self.config = config
        self._sleep = sleep
        self._limiter = _RateLimiter(config.rate_limit, config.rate_window, sleep)
        self._client = httpx.Client(
            base_url=config.base_url,
            headers={"apiKey": config.resolved_api_key()},
            timeout=config.timeout,
            transport=transport,
        )

    def _request(self, path: str, params: dict) -> tuple[httpx.Response, int]:
        retries = 0
        delay = self.config.backoff
        while True:
            self._limiter.wait()
            resp = self._client.get(path, params=params)
            if resp.status_code in (429, 500, 502, 503) and retries < self.config.max_retries:
                retries += 1
                self._sleep(delay)
                delay *= 2
                continue
            return resp, retries

    def _search_ids(self, query: str) -> list[str]:
        ids: list[str] = []
        start = 0
        while True:
            resp, _ = self._request(
                "/search", {"query": query, "start": start, "count": self.config.page_size}
            )
            resp.raise_for_status()
            payload = resp.json()
            if payload.get("quota_exceeded"):
                raise QuotaExhausted("search quota exhausted")
            batch = payload.get("ids", [])
            ids.extend(str(i) for i in batch)
            total = int(payload.get("total", len(ids)))
            start += len(batch)
            if not batch or start >= total:
                return ids

    def fetch(self, query: str, cursor: Cursor) -> Iterator[FetchOutcome]:
        if not cursor.identifiers:
            cursor.identifiers = self._search_ids(query)
            cursor.position = 0
            cursor.save()
        while cursor.position < len(cursor.identifiers):
            identifier = cursor.identifiers[cursor.position]
            resp, retries = self._request(f"/document/{identifier}", {})
            if resp.status_code != 200:
                outcome = FetchOutcome(
                    identifier=identifier,
                    error=f"HTTP {resp.status_code} after {retries} retries",
                    retries=retries,
                )
            else:
                payload = resp.json()
                if payload.get("quota_exceeded"):
                    raise QuotaExhausted(f"quota exhausted at position {cursor.position}")
                outcome = FetchOutcome(
                    identifier=identifier,
                    record=DocumentRecord.from_json_dict(payload),
                    retries=retries,
                )
            cursor.position += 1
            cursor.save()
            yield outcome

    def close(self) -> None:
        self._client.close()


class FileDocumentSource:
    """Offline source reading pre-captured raw records from an NDJSON file."""

    def __init__(self, path: str):
        self.path = path

    def fetch(self, query: str, cursor: Cursor) -> Iterator[FetchOutcome]:
        with open(self.path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip()]
        if not cursor.identifiers:
            cursor.identifiers = [str(i) for i in range(len(lines))]
            cursor.position = 0
            cursor.save()
        while cursor.position < len(cursor.identifiers):
            idx = int(cursor.identifiers[cursor.position])
            record = DocumentRecord.from_json_dict(json.loads(lines[idx]))
            cursor.position += 1
            cursor.save()
            yield FetchOutcome(identifier=str(idx), record=record)
