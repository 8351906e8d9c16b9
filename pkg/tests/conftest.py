import datetime as dt
import json
import os

import numpy as np
import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
RAW_CORPUS = os.path.join(FIXTURES, "synthetic_raw.ndjson")

WINDOW_START = dt.date(2006, 1, 1)
WINDOW_END = dt.date(2023, 12, 31)


def make_blobs(n_per_blob=200, n_blobs=5, dim=10, spread=0.5, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 10.0, (n_blobs, dim))
    X = np.vstack(
        [c + rng.normal(0.0, spread, (n_per_blob, dim)) for c in centers]
    )
    labels = np.repeat(np.arange(n_blobs), n_per_blob)
    return X, labels, centers


@pytest.fixture(scope="session")
def blobs5():
    """Five separated Gaussian blobs in 10-D, 200 points each."""
    return make_blobs()


@pytest.fixture(scope="session")
def blobs5_small():
    return make_blobs(n_per_blob=60)


@pytest.fixture(scope="session")
def cleaned_records():
    from topiclab import corpus

    records = corpus.read_ndjson(RAW_CORPUS)
    kept, _ = corpus.clean(records, WINDOW_START, WINDOW_END, "English")
    assert len(kept) == 1000
    return kept


@pytest.fixture(scope="session")
def stub_embeddings(cleaned_records):
    from topiclab.embed import StubProvider, embed_documents

    provider = StubProvider(dim=10, seed=0)
    matrix = embed_documents(cleaned_records, provider, batch_size=128)
    return matrix, provider


@pytest.fixture(scope="session")
def recovery_run(stub_embeddings):
    """Optimizer recovery run on the dim-10 stub embeddings (20 steps, seed 9)."""
    import time

    import numpy as np
    from topiclab import optimizer as opt

    matrix, _ = stub_embeddings
    X = matrix.values.astype(np.float64)
    started = time.monotonic()
    best = opt.random_search(
        X, opt.SearchSpace(), opt.OptimizerConfig(steps=20, seed=9)
    )
    final = opt.fit_final(X, best.config, seed=best.seed)
    elapsed = time.monotonic() - started
    return X, best, final, elapsed


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    """Full pipeline run over the committed synthetic corpus via the CLI.

    fetch(file mock) -> clean -> embed(stub) -> optimize(20 steps, seed 2)
    -> fit -> represent -> timeseries; shared by the CLI, server, and
    acceptance suites. The serving fixture uses a 128-bucket stub so that
    single-term search queries are informative.
    """
    from click.testing import CliRunner
    from topiclab.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    config = {
        "pipeline_dir": ".",
        "window_start": WINDOW_START.isoformat(),
        "window_end": WINDOW_END.isoformat(),
        "language": "English",
        "provider": {"kind": "stub", "dim": 128, "seed": 0},
        "fetch": {"kind": "file", "path": RAW_CORPUS},
        "optimizer": {"steps": 20, "seed": 2, "threshold": 0.30},
        "project_id": "synthetic",
        "project_name": "Synthetic themes",
        "resolvers": [{"kind": "file", "path": RAW_CORPUS}],
    }
    config_path = root / "pipeline.json"
    config_path.write_text(json.dumps(config))

    runner = CliRunner()
    for command in ["fetch", "clean", "embed", "optimize", "fit", "represent", "timeseries"]:
        result = runner.invoke(
            main, ["--config", str(config_path), command], catch_exceptions=False
        )
        assert result.exit_code == 0, f"{command} failed:\n{result.output}"
    return root


@pytest.fixture(scope="session")
def server_app(pipeline_dir):
    from topiclab import server

    config = {
        "projects": [
            {
                "id": "synthetic",
                "name": "Synthetic themes",
                "pipeline_dir": str(pipeline_dir),
                "provider": {"kind": "stub", "dim": 128, "seed": 0},
                "resolvers": [{"kind": "file", "path": RAW_CORPUS}],
            }
        ]
    }
    return server.create_app(config)


@pytest.fixture(scope="session")
def client(server_app):
    from fastapi.testclient import TestClient

    return TestClient(server_app)
