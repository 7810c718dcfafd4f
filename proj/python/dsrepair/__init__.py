# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The dsrepair Authors
"""Python access to the dsrepair C++ core."""

from ._core import (
    KnowledgeGraph,
    QuerySyntaxError,
    clean_stderr,
    cost,
    extract_invocations,
    extract_tests,
    format_rate,
    ingest,
    modes,
    prompt_hash,
    richness_levels,
    run_cli,
    summarize_anf,
)

__all__ = [
    "KnowledgeGraph",
    "QuerySyntaxError",
    "clean_stderr",
    "cost",
    "extract_invocations",
    "extract_tests",
    "format_rate",
    "ingest",
    "modes",
    "prompt_hash",
    "richness_levels",
    "run_cli",
    "summarize_anf",
]
