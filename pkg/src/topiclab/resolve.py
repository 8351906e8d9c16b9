"""External DOI resolution behind a small client interface.

Resolvers turn a DOI into a raw document record. The HTTP client covers
real metadata services; the file-backed resolver serves tests and offline
runs. A chain tries resolvers in configured order and the first success
wins.
"""

from __future__ import annotations

import json
import os
import re

import httpx

from .corpus import DocumentRecord

__all__ = [
    "ResolverError",
    "is_valid_doi",
    "FileDoiResolver",
    "HttpDoiResolver",
    "resolve_chain",
]

_DOI_RE = re.compile(r"^10\.\d{4,9}/\S+$")


class ResolverError(Exception):
    """A resolver service failed (network, HTTP 5xx, bad payload)."""


def is_valid_doi(doi: str) -> bool:
    return bool(_DOI_RE.match(doi or ""))


class FileDoiResolver:
    """Looks DOIs up in an NDJSON file of raw records."""

    def __init__(self, path: str):
        self.path = path
        self._index: dict[str, dict] | None = None

    def _load(self) -> dict[str, dict]:
        if self._index is None:
            self._index = {}
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        if rec.get("doi"):
                            self._index[rec["doi"]] = rec
        return self._index

    def resolve(self, doi: str) -> DocumentRecord | None:
        rec = self._load().get(doi)
        return DocumentRecord.from_json_dict(rec) if rec else None


class HttpDoiResolver:
    """GET {base_url}/{doi} with an optional API key from the environment."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "",
        timeout: float = 15.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def resolve(self, doi: str) -> DocumentRecord | None:
        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["apiKey"] = key
        try:
            resp = self._client.get(f"{self.base_url}/{doi}", headers=headers)
        except httpx.HTTPError as exc:
            raise ResolverError(str(exc)) from exc
        if resp.status_code == 404:
            return None
        if resp.status_code != 200:
            raise ResolverError(f"HTTP {resp.status_code} from {self.base_url}")
        try:
            return DocumentRecord.from_json_dict(resp.json())
        except (ValueError, KeyError) as exc:
            raise ResolverError(f"bad payload from {self.base_url}: {exc}") from exc


def resolve_chain(resolvers, doi: str) -> DocumentRecord | None:
    """First successful resolution wins.

    Returns None when every resolver definitively reports the DOI unknown;
    raises :class:`ResolverError` when all of them failed outright.
    """
    not_found = 0
    last_error: ResolverError | None = None
    for resolver in resolvers:
        try:
            record = resolver.resolve(doi)
        except ResolverError as exc:
            last_error = exc
            continue
        if record is not None:
            return record
        not_found += 1
    if not_found == 0 and last_error is not None:
        raise last_error
    return None
