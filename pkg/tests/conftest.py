import json

import pytest

from emovae.corpus import generate_synthetic_corpus, load_manifest

# (criterion, passed, detail) lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """40 utterances: 5 sessions x 2 speakers x 4 utterances."""
    out = tmp_path_factory.mktemp("small_corpus")
    return generate_synthetic_corpus(out, seed=3, utterances_per_speaker=4)


@pytest.fixture(scope="session")
def small_records(small_corpus):
    return load_manifest(small_corpus)


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """The default synthetic corpus (seed 7, 120 utterances)."""
    out = tmp_path_factory.mktemp("default_corpus")
    return generate_synthetic_corpus(out, seed=7)


@pytest.fixture
def tiny_config():
    """Small, fast settings for exercising the full pipeline."""
    return {
        "seeds": [0],
        "representation": {"epochs": 2, "hidden_dims": [24, 12], "latent_dim": 6},
        "classifier": {"max_epochs": 3, "lstm_hidden": [6, 6]},
    }


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path
    return _write


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
