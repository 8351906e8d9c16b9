import json

import httpx
import pytest

from topiclab.fetching import (
    ClientConfig,
    Cursor,
    FileDocumentSource,
    HttpDocumentSource,
    QuotaExhausted,
)


def make_doc(i):
    return {
        "doi": f"10.1/doc{i}",
        "source_id": f"S{i}",
        "title": f"Title {i}",
        "abstract": f"Abstract {i}",
        "pub_date": "2010-01-01",
        "language": "English",
    }


class ScriptedServer:
    """httpx mock transport scripted per path."""

    def __init__(self, ids, docs, fail_first=None, quota_after=None):
        self.ids = ids
        self.docs = docs
        self.fail_first = dict(fail_first or {})   # path -> number of 429s
        self.quota_after = quota_after
        self.served = 0
        self.requests = []

    def handler(self, request: httpx.Request) -> httpx.Response:
        path = request.url.path
        self.requests.append(path)
        if self.fail_first.get(path, 0) > 0:
            self.fail_first[path] -= 1
            return httpx.Response(429)
        if path == "/search":
            return httpx.Response(
                200, json={"ids": self.ids, "total": len(self.ids)}
            )
        if path.startswith("/document/"):
            if self.quota_after is not None and self.served >= self.quota_after:
                return httpx.Response(200, json={"quota_exceeded": True})
            self.served += 1
            ident = path.rsplit("/", 1)[1]
            return httpx.Response(200, json=self.docs[ident])
        return httpx.Response(404)

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handler)


def make_source(server, tmp_path, **config):
    cfg = ClientConfig(base_url="http://mock", backoff=0.0, **config)
    return HttpDocumentSource(cfg, transport=server.transport(), sleep=lambda s: None)


def test_happy_path_three_records(tmp_path):
    ids = ["a", "b", "c"]
    docs = {i: make_doc(i) for i in ids}
    server = ScriptedServer(ids, docs)
    source = make_source(server, tmp_path)
    cursor = Cursor.load(str(tmp_path / "cursor.json"))
    outcomes = list(source.fetch("q", cursor))
    assert len(outcomes) == 3
    assert [o.record.doi for o in outcomes] == ["10.1/doca", "10.1/docb", "10.1/docc"]


def test_retries_recorded_on_429(tmp_path):
    ids = ["a"]
    docs = {"a": make_doc("a")}
    server = ScriptedServer(ids, docs, fail_first={"/document/a": 2})
    source = make_source(server, tmp_path)
    outcomes = list(source.fetch("q", Cursor.load(str(tmp_path / "c.json"))))
    assert len(outcomes) == 1
    assert outcomes[0].retries == 2
    assert outcomes[0].record is not None


def test_http_failure_after_retries_yields_error_entry(tmp_path):
    ids = ["a", "b"]
    docs = {"a": make_doc("a"), "b": make_doc("b")}
    server = ScriptedServer(ids, docs, fail_first={"/document/a": 99})
    source = make_source(server, tmp_path, max_retries=2)
    outcomes = list(source.fetch("q", Cursor.load(str(tmp_path / "c.json"))))
    assert outcomes[0].error is not None and "429" in outcomes[0].error
    assert outcomes[1].record is not None


def test_quota_suspends_and_resume_completes(tmp_path):
    ids = list("abcde")
    docs = {i: make_doc(i) for i in ids}
    cursor_path = str(tmp_path / "cursor.json")

    server = ScriptedServer(ids, docs, quota_after=2)
    source = make_source(server, tmp_path)
    cursor = Cursor.load(cursor_path)
    got = []
    with pytest.raises(QuotaExhausted):
        for outcome in source.fetch("q", cursor):
            got.append(outcome)
    assert len(got) == 2
    persisted = Cursor.load(cursor_path)
    assert persisted.position == 2
    assert persisted.identifiers == ids

    # new session, fresh quota: the remaining 3 arrive
    server2 = ScriptedServer(ids, docs)
    source2 = make_source(server2, tmp_path)
    rest = list(source2.fetch("q", persisted))
    assert len(rest) == 3
    assert "/search" not in server2.requests   # ids came from the cursor


def test_rate_limited_requests_spread_out(tmp_path):
    ids = ["a", "b", "c"]
    docs = {i: make_doc(i) for i in ids}
    server = ScriptedServer(ids, docs)
    sleeps = []
    cfg = ClientConfig(base_url="http://mock", rate_limit=2, rate_window=10.0, backoff=0.0)
    source = HttpDocumentSource(cfg, transport=server.transport(), sleep=sleeps.append)
    list(source.fetch("q", Cursor.load(str(tmp_path / "c.json"))))
    assert sleeps, "third request within the window should have waited"


def test_file_source_round_trip(tmp_path):
    path = tmp_path / "raw.ndjson"
    with open(path, "w") as fh:
        for i in range(4):
            fh.write(json.dumps(make_doc(i)) + "\n")
    source = FileDocumentSource(str(path))
    outcomes = list(source.fetch("", Cursor.load(str(tmp_path / "c.json"))))
    assert [o.record.doi for o in outcomes] == [f"10.1/doc{i}" for i in range(4)]


def test_api_key_header_sent(tmp_path, monkeypatch):
    seen = {}

    def handler(request):
        seen["apiKey"] = request.headers.get("apiKey")
        return httpx.Response(200, json={"ids": [], "total": 0})

    monkeypatch.setenv("TOPICLAB_API_KEY", "sekrit")
    cfg = ClientConfig(base_url="http://mock")
    source = HttpDocumentSource(cfg, transport=httpx.MockTransport(handler))
    list(source.fetch("q", Cursor.load(str(tmp_path / "c.json"))))
    assert seen["apiKey"] == "sekrit"
