// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Test extraction from task descriptions and the mapping from runner
// responses to bug reports.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsrepair/runner.hpp"

namespace dsrepair::bug {

struct TestSpec {
    std::string fixtures;                 // setup statements, newline-joined
    std::vector<std::string> assertions;  // may be empty

    bool empty() const noexcept { return assertions.empty(); }
    /// Assertions joined with newlines, as sent in RunRequest::tests.
    std::string tests_text() const;

    friend bool operator==(const TestSpec&, const TestSpec&) = default;
};

/// Fenced (```) and <code> blocks of `description`, in order. HTML entities
/// inside <code> blocks are decoded.
std::vector<std::string> code_blocks(std::string_view description);

/// A non-blank `harness` is adopted verbatim as the single assertion text.
/// Otherwise `assert` statements found in code blocks become assertions and
/// the other statements of blocks up to the last such block become fixtures.
TestSpec extract_tests(std::string_view description, std::string_view harness = {});

enum class BugKind { runtime, assertion, unknown };
std::string_view to_string(BugKind k) noexcept;

inline constexpr std::string_view kStartOfProgram = "<start of program>";

struct BugReport {
    BugKind kind = BugKind::unknown;
    std::string last_executed_source;
    std::string first_failed_source;  // innermost failing call when the runner refined it
    std::string failed_statement;     // whole top-level statement at first_failed_index
    std::string captured_value_repr;
    std::optional<std::string> expected_repr;
    std::string stderr_raw;
    std::string note;

    friend bool operator==(const BugReport&, const BugReport&) = default;
};

/// Right-hand literal of `assert <expr> == <literal>` (or the left side when
/// only that one is a literal). nullopt when neither side is a plain literal.
std::optional<std::string> expected_literal(std::string_view assertion);

/// Pure mapping. nullopt means the code passed non-empty tests.
std::optional<BugReport> to_bug_report(const runner::RunResponse& response, std::string_view code,
                                       const TestSpec& tests);

/// BugReport for a runner that failed to answer.
BugReport runner_failure_report(std::string_view error);

/// Request sent for `code`: fixtures are appended to `imports`.
runner::RunRequest make_request(runner::RunMode mode, std::string_view code, const TestSpec& tests,
                                std::string_view imports, double timeout_s);

/// Localizes `code` through `r` and maps the answer. Runner failures become
/// kind=unknown reports.
std::optional<BugReport> enrich(std::string_view code, const TestSpec& tests, std::string_view imports,
                                runner::Runner& r, double timeout_s = 10.0);

}  // namespace dsrepair::bug
