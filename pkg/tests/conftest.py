from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(FIXTURES))

from dbs import build_all  # noqa: E402

from structsql.question import (  # noqa: E402
    build_query_graph,
    parse,
    resolve_coreference,
    select_interpretation,
    tokenize,
)
from structsql.schema_graph import build_schema_graph, load_spider_catalogs  # noqa: E402


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def catalogs():
    data = (FIXTURES / "tables.json").read_bytes()
    return {c.db_id: c for c in load_spider_catalogs(data)}


@pytest.fixture(scope="session")
def schemas(catalogs):
    return {db_id: build_schema_graph(c) for db_id, c in catalogs.items()}


@pytest.fixture(scope="session")
def dbs_dir(tmp_path_factory) -> Path:
    target = tmp_path_factory.mktemp("fixture_dbs")
    build_all(target)
    return target


@pytest.fixture(scope="session")
def eval20():
    return json.loads((FIXTURES / "eval20.json").read_text())


@pytest.fixture(scope="session")
def appendix_cases():
    return json.loads((FIXTURES / "appendix_cases.json").read_text())


@pytest.fixture(scope="session")
def toybench():
    return json.loads((FIXTURES / "toybench.json").read_text())


@pytest.fixture(scope="session")
def corpus30():
    return json.loads((FIXTURES / "corpus30.json").read_text())


def analyze_question(question: str):
    """tokenize -> best parse -> coref -> query graph, shared by many tests."""
    tokens = tokenize(question)
    best = select_interpretation(parse(tokens))
    coref = resolve_coreference(tokens, best.tree)
    qg = build_query_graph(tokens, best.tree, coref)
    return tokens, best, coref, qg


@pytest.fixture(scope="session")
def analyze():
    return analyze_question
