from __future__ import annotations

from pathlib import Path

import pytest

from vctrace.schema import default_registry

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def lexicon():
    from vctrace.lexicon import load_lexicon_tsv

    return load_lexicon_tsv(FIXTURES / "lexicon.tsv")


@pytest.fixture(scope="session")
def kg():
    from vctrace.knowledge import load_kg

    return load_kg(FIXTURES / "kg_nodes.tsv", FIXTURES / "kg_edges.tsv")


@pytest.fixture(scope="session")
def documents():
    from vctrace.knowledge import load_documents

    return load_documents(FIXTURES / "documents.jsonl")
