// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Lexical helpers over Python source text. Nothing here parses Python fully;
// the scanners only track strings, comments, brackets and indentation, so
// they keep working on code that would not compile.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dsrepair::python {

/// Copy of `code` with comment text and string-literal contents replaced by
/// spaces. Quotes, newlines and byte offsets are preserved.
std::string mask_strings_and_comments(std::string_view code);

struct Statement {
    std::string text;
    std::size_t first_line = 0;  // 1-based
};

/// Top-level statements in module order, approximating `ast.parse(code).body`:
/// compound statements keep their indented bodies and `elif`/`else`/`except`/
/// `finally` clauses, decorators attach to the following definition, and
/// simple statements separated by `;` are split.
std::vector<Statement> top_level_statements(std::string_view code);

bool is_keyword(std::string_view word) noexcept;

}  // namespace dsrepair::python
