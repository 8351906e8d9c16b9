"""Corpus ingestion: source queries, record cleaning, deduplication, statistics.

Records are kept in newline-delimited JSON, one document per line, with
ISO-8601 dates. Cleaning and statistics are pure functions; see
:mod:`topiclab.fetching` for the source-API client.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, asdict
from typing import Iterable

__all__ = [
    "DocumentRecord",
    "CleaningReport",
    "CorpusStats",
    "build_query",
    "clean",
    "corpus_stats",
    "read_ndjson",
    "write_ndjson",
]


@dataclass
class DocumentRecord:
    """One publication as pulled from the source API."""

    doi: str = ""
    source_id: str = ""
    title: str = ""
    abstract: str = ""
    pub_date: dt.date | None = None
    language: str = ""
    author_keywords: list[str] = field(default_factory=list)
    subject_areas: list[str] = field(default_factory=list)
    extra_metadata: dict[str, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["pub_date"] = self.pub_date.isoformat() if self.pub_date else None
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "DocumentRecord":
        raw_date = d.get("pub_date")
        pub_date = None
        if raw_date:
            try:
                pub_date = dt.date.fromisoformat(str(raw_date)[:10])
            except ValueError:
                pub_date = None
        return cls(
            doi=d.get("doi") or "",
            source_id=d.get("source_id") or "",
            title=d.get("title") or "",
            abstract=d.get("abstract") or "",
            pub_date=pub_date,
            language=d.get("language") or "",
            author_keywords=list(d.get("author_keywords") or []),
            subject_areas=list(d.get("subject_areas") or []),
            extra_metadata=dict(d.get("extra_metadata") or {}),
        )


@dataclass
class CleaningReport:
    input_count: int = 0
    dropped_missing_fields: int = 0
    dropped_duplicates: int = 0
    dropped_out_of_window: int = 0
    dropped_language: int = 0
    output_count: int = 0

    def to_json_dict(self) -> dict:
        return asdict(self)


@dataclass
class CorpusStats:
    """Yearly counts plus per-field missing-value percentages.

    Records without a parseable publication date are tallied under the
    ``None`` year key so the per-year counts always sum to the input size.
    """

    per_year_counts: dict[int | None, int]
    missing_field_percentages: dict[str, float]

    def to_json_dict(self) -> dict:
        years = {
            ("unknown" if y is None else str(y)): c
            for y, c in sorted(
                self.per_year_counts.items(), key=lambda kv: (kv[0] is None, kv[0] or 0)
            )
        }
        return {
            "per_year_counts": years,
            "missing_field_percentages": self.missing_field_percentages,
        }


def build_query(
    keywords: list[str],
    year_start: int,
    year_end: int,
    language: str = "English",
    pubstage: str = "final",
) -> str:
    """Build a boolean source-API query string.

    Each keyword becomes a double-quoted loose-phrase restriction on the
    keyword field; the clauses are OR-joined and AND-ed with the publication
    stage, year window (inclusive), and language restrictions.
    """
    if not keywords:
        raise ValueError("keyword list must not be empty")
    if any(not k.strip() for k in keywords):
        raise ValueError("keywords must be non-blank")
    if year_start > year_end:
        raise ValueError(f"year_start {year_start} > year_end {year_end}")
    key_clause = " OR ".join(f'KEY("{k}")' for k in keywords)
    return (
        f"({key_clause}) AND PUBSTAGE({pubstage})"
        f" AND PUBYEAR > {year_start - 1} AND PUBYEAR < {year_end + 1}"
        f" AND LANGUAGE({language})"
    )


def _is_missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, str):
        return not value.strip()
    if isinstance(value, (list, dict)):
        return len(value) == 0
    return False


def clean(
    records: Iterable[DocumentRecord],
    window_start: dt.date,
    window_end: dt.date,
    language: str,
) -> tuple[list[DocumentRecord], CleaningReport]:
    """Filter and deduplicate records, accounting for every drop.

    Drop rules apply in a fixed order -- missing required fields, duplicate
    identifiers, publication window, language -- and each dropped record is
    counted once under the first rule that rejects it. Duplicates are
    detected against the first occurrence in input order of either the DOI
    or the internal source id; the first occurrence wins even if a later
    rule drops it.
    """
    if window_start > window_end:
        raise ValueError("window_start must not exceed window_end")
    report = CleaningReport()
    kept: list[DocumentRecord] = []
    seen_dois: set[str] = set()
    seen_source_ids: set[str] = set()
    for rec in records:
        report.input_count += 1
        if (
            _is_missing(rec.doi)
            or _is_missing(rec.title)
            or _is_missing(rec.abstract)
            or rec.pub_date is None
        ):
            report.dropped_missing_fields += 1
            continue
        duplicate = rec.doi in seen_dois or (
            rec.source_id and rec.source_id in seen_source_ids
        )
        seen_dois.add(rec.doi)
        if rec.source_id:
            seen_source_ids.add(rec.source_id)
        if duplicate:
            report.dropped_duplicates += 1
            continue
        if not (window_start <= rec.pub_date <= window_end):
            report.dropped_out_of_window += 1
            continue
        if rec.language != language:
            report.dropped_language += 1
            continue
        kept.append(rec)
    report.output_count = len(kept)
    return kept, report


#: Core record fields inspected for missing-value statistics.
_STAT_FIELDS = (
    "doi",
    "source_id",
    "title",
    "abstract",
    "pub_date",
    "language",
    "author_keywords",
    "subject_areas",
)


def corpus_stats(records: list[DocumentRecord]) -> CorpusStats:
    """Per-year counts and the percentage of records missing each field.

    Extra metadata keys observed anywhere in the corpus participate too: a
    record missing the key entirely counts as missing it.
    """
    n = len(records)
    per_year: dict[int | None, int] = {}
    for rec in records:
        year = rec.pub_date.year if rec.pub_date else None
        per_year[year] = per_year.get(year, 0) + 1

    missing: dict[str, int] = {f: 0 for f in _STAT_FIELDS}
    extra_keys: set[str] = set()
    for rec in records:
        extra_keys.update(rec.extra_metadata.keys())
    for key in extra_keys:
        missing[key] = 0
    for rec in records:
        for f in _STAT_FIELDS:
            if _is_missing(getattr(rec, f)):
                missing[f] += 1
        for key in extra_keys:
            if _is_missing(rec.extra_metadata.get(key)):
                missing[key] += 1
    percentages = {
        f: (100.0 * c / n if n else 0.0) for f, c in sorted(missing.items())
    }
    return CorpusStats(per_year_counts=per_year, missing_field_percentages=percentages)


def write_ndjson(path, records: Iterable[DocumentRecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def read_ndjson(path) -> list[DocumentRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(DocumentRecord.from_json_dict(json.loads(line)))
    return records
