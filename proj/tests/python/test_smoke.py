# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The dsrepair Authors
"""Smoke tests for the Python module."""

import json
import math
import os
from pathlib import Path

import pytest

import dsrepair

ROOT = Path(__file__).resolve().parents[2]
DATA = Path(os.environ.get("DSREPAIR_DATA_DIR", ROOT / "data"))
FIXTURES = Path(os.environ.get("DSREPAIR_FIXTURES_DIR", ROOT / "tests" / "fixtures"))


@pytest.fixture(scope="module")
def graph():
    g, errors = dsrepair.ingest((DATA / "sample_api_docs.jsonl").read_text(encoding="utf-8"))
    assert errors == []
    return g


def test_ingest_and_query(graph):
    assert len(graph) > 0
    rows = graph.query("SELECT ?e WHERE { ds:numpy.flipud has_expression ?e }")
    assert rows == [{"e": "numpy.flipud(m)"}]
    assert "numpy.flipud(m)" in graph.knowledge("numpy.flipud", "expression_only")
    assert graph.knowledge("no.such.api") == ""


def test_dump_round_trip(graph):
    text = graph.dump()
    assert dsrepair.KnowledgeGraph.from_dump(text).dump() == text


def test_query_syntax_error(graph):
    with pytest.raises(dsrepair.QuerySyntaxError):
        graph.query("SELECT ?e WHERE { ds:x has_expression }")
    with pytest.raises(ValueError):
        graph.knowledge("numpy.flipud", "everything")


def test_bad_records_are_reported():
    _, errors = dsrepair.ingest('{"qualified_name": "numpy.x"}\n')
    assert len(errors) == 1
    assert errors[0][0] == 1


def test_extract_invocations_matches_fixtures():
    cases = json.loads((FIXTURES / "extraction" / "cases.json").read_text(encoding="utf-8"))
    for case in cases:
        got = dsrepair.extract_invocations(case["code"])
        assert [i["qualified_name"] for i in got] == case["expected"], case["name"]
        assert [i["qualified_name"] for i in got if i["resolved"]] == case["resolved"], case["name"]


def test_clean_stderr_drops_warnings_and_paths():
    raw = (FIXTURES / "stderr" / "sklearn_warning.txt").read_text(encoding="utf-8")
    cleaned = dsrepair.clean_stderr(raw)
    assert "Warning" not in cleaned
    assert "/usr/" not in cleaned
    assert cleaned.endswith("[10, 12]\n")


def test_extract_tests():
    fixtures, assertions = dsrepair.extract_tests("Goal.\n```python\nassert b == 2\n```")
    assert fixtures == ""
    assert assertions == ["assert b == 2"]


def test_cost_and_metrics():
    assert math.isclose(dsrepair.cost([(1000, 500)], 0.50, 1.50), 0.00125, rel_tol=0, abs_tol=1e-12)
    assert dsrepair.format_rate(104, 562) == "18.51%"
    median, mean, std = dsrepair.summarize_anf([6, 8, 7])
    assert median == 2
    assert mean == 7.0
    assert math.isclose(std, math.sqrt(2 / 3), abs_tol=1e-12)


def test_prompt_hash():
    assert dsrepair.prompt_hash("") == "cbf29ce484222325"
    assert dsrepair.prompt_hash("foobar") == "85944171f73967e8"


def test_names():
    assert "dsrepair" in dsrepair.modes()
    assert "self_repair" in dsrepair.modes()
    assert dsrepair.richness_levels()[0] == "expression_only"


def test_run_cli():
    code, out, _ = dsrepair.run_cli(["--help"])
    assert code == 0
    assert "repair" in out
    code, _, err = dsrepair.run_cli(["frobnicate"])
    assert code == 2
    assert err
