// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/bug_enrichment.hpp"

#include <cctype>

#include "dsrepair/python_source.hpp"

namespace dsrepair::bug {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string decode_entities(std::string_view s) {
    static constexpr std::pair<std::string_view, char> kEntities[] = {
        {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&#39;", '\''}, {"&#x27;", '\''}, {"&amp;", '&'}};
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
        bool replaced = false;
        if (s[i] == '&') {
            for (auto [name, c] : kEntities) {
                if (s.substr(i, name.size()) == name) {
                    out.push_back(c);
                    i += name.size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out.push_back(s[i++]);
    }
    return out;
}

bool starts_with_word(std::string_view s, std::string_view word) {
    return s.starts_with(word) &&
           (s.size() == word.size() || !(std::isalnum(static_cast<unsigned char>(s[word.size()])) ||
                                          s[word.size()] == '_'));
}

}  // namespace

std::string TestSpec::tests_text() const {
    std::string out;
    for (const auto& a : assertions) {
        if (!out.empty()) out.push_back('\n');
        out += a;
    }
    return out;
}

std::vector<std::string> code_blocks(std::string_view d) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < d.size()) {
        const auto fence = d.find("```", i);
        const auto tag = d.find("<code>", i);
        if (fence == std::string_view::npos && tag == std::string_view::npos) break;
        if (fence < tag) {
            auto body = d.find('\n', fence);  // skip the info string
            if (body == std::string_view::npos) break;
            auto close = d.find("```", body + 1);
            if (close == std::string_view::npos) close = d.size();
            out.emplace_back(d.substr(body + 1, close - body - 1));
            i = close == d.size() ? close : close + 3;
        } else {
            auto body = tag + 6;
            auto close = d.find("</code>", body);
            if (close == std::string_view::npos) close = d.size();
            out.push_back(decode_entities(d.substr(body, close - body)));
            i = close == d.size() ? close : close + 7;
        }
    }
    return out;
}

TestSpec extract_tests(std::string_view description, std::string_view harness) {
    TestSpec spec;
    if (!trim(harness).empty()) {
        spec.assertions.emplace_back(harness);
        return spec;
    }

    std::vector<std::string> fixtures;
    std::vector<std::string> pending;  // fixtures not yet confirmed by a later assertion block
    for (const auto& block : code_blocks(description)) {
        bool has_assert = false;
        std::vector<std::string> setup;
        for (const auto& stmt : python::top_level_statements(block)) {
            if (starts_with_word(stmt.text, "assert")) {
                spec.assertions.push_back(stmt.text);
                has_assert = true;
            } else {
                setup.push_back(stmt.text);
            }
        }
        pending.insert(pending.end(), setup.begin(), setup.end());
        if (has_assert) {
            fixtures.insert(fixtures.end(), pending.begin(), pending.end());
            pending.clear();
        }
    }
    if (spec.assertions.empty()) return {};
    for (const auto& f : fixtures) {
        if (!spec.fixtures.empty()) spec.fixtures.push_back('\n');
        spec.fixtures += f;
    }
    return spec;
}

std::string_view to_string(BugKind k) noexcept {
    switch (k) {
        case BugKind::runtime: return "runtime";
        case BugKind::assertion: return "assertion";
        case BugKind::unknown: return "unknown";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Python literal recognizer

namespace {

class LiteralParser {
public:
    explicit LiteralParser(std::string_view s) : s_(s) {}

    bool parse_all() {
        skip_ws();
        if (!value()) return false;
        skip_ws();
        return pos_ == s_.size();
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool peek(char c) {
        skip_ws();
        return pos_ < s_.size() && s_[pos_] == c;
    }

    bool value() {
        skip_ws();
        if (pos_ >= s_.size()) return false;
        const char c = s_[pos_];
        if (c == '[') return sequence(']', false);
        if (c == '(') return sequence(')', false);
        if (c == '{') return sequence('}', true);
        if (c == '+' || c == '-') {
            ++pos_;
            return number();
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (string()) {
            while (string()) {}  // implicit concatenation
            return true;
        }
        for (std::string_view word : {"True", "False", "None"}) {
            if (s_.substr(pos_).starts_with(word)) {
                const auto end = pos_ + word.size();
                if (end == s_.size() || !(std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_')) {
                    pos_ = end;
                    return true;
                }
            }
        }
        return false;
    }

    bool number() {
        const auto start = pos_;
        bool digits = false;
        if (s_.substr(pos_).starts_with("0x") || s_.substr(pos_).starts_with("0X")) {
            pos_ += 2;
            while (pos_ < s_.size() && (std::isxdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                ++pos_;
                digits = true;
            }
            return digits;
        }
        auto run = [&] {
            bool any = false;
            while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                ++pos_;
                any = true;
            }
            return any;
        };
        digits = run();
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            digits = run() || digits;
        }
        if (!digits) {
            pos_ = start;
            return false;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (!run()) return false;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'j' || s_[pos_] == 'J')) ++pos_;
        return pos_ == s_.size() || !(std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_');
    }

    bool string() {
        skip_ws();
        auto p = pos_;
        while (p < s_.size() && p - pos_ < 2 && std::string_view("rRbBuU").find(s_[p]) != std::string_view::npos) ++p;
        if (p >= s_.size() || (s_[p] != '"' && s_[p] != '\'')) return false;
        const char q = s_[p];
        const bool triple = s_.substr(p, 3) == std::string(3, q);
        p += triple ? 3 : 1;
        while (p < s_.size()) {
            if (s_[p] == '\\') {
                p += 2;
                continue;
            }
            if (s_[p] == q && (!triple || s_.substr(p, 3) == std::string(3, q))) {
                pos_ = p + (triple ? 3 : 1);
                return true;
            }
            if (s_[p] == '\n' && !triple) return false;
            ++p;
        }
        return false;
    }

    bool sequence(char close, bool braces) {
        ++pos_;
        if (eat(close)) return true;
        bool dict = false;
        for (bool first = true;; first = false) {
            if (!value()) return false;
            if (braces) {
                const bool colon = eat(':');
                if (first) dict = colon;
                if (colon != dict) return false;
                if (dict && !value()) return false;
            }
            if (eat(close)) return true;
            if (!eat(',')) return false;
            if (eat(close)) return true;
            if (peek(close)) return false;
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

bool is_literal(std::string_view s) {
    s = trim(s);
    return !s.empty() && LiteralParser(s).parse_all();
}

}  // namespace

std::optional<std::string> expected_literal(std::string_view assertion) {
    const std::string masked = python::mask_strings_and_comments(assertion);
    std::string_view m = masked;
    auto start = m.find_first_not_of(" \t\n");
    if (start == std::string_view::npos || !starts_with_word(m.substr(start), "assert")) return std::nullopt;
    start += 6;

    // Expression ends at the top-level comma that introduces the message.
    std::size_t end = m.size();
    std::size_t eq = std::string_view::npos;
    int depth = 0;
    for (std::size_t i = start; i < m.size(); ++i) {
        const char c = m[i];
        if (c == '(' || c == '[' || c == '{') ++depth;
        if (c == ')' || c == ']' || c == '}') --depth;
        if (depth != 0) continue;
        if (c == ',') {
            end = i;
            break;
        }
        if (c == '=' && i + 1 < m.size() && m[i + 1] == '=' && (i == 0 || std::string_view("=!<>").find(m[i - 1]) == std::string_view::npos)) {
            if (eq != std::string_view::npos) return std::nullopt;  // chained comparison
            eq = i;
            ++i;
        }
    }
    if (eq == std::string_view::npos || eq > end) return std::nullopt;

    const auto lhs = trim(assertion.substr(start, eq - start));
    const auto rhs = trim(assertion.substr(eq + 2, end - eq - 2));
    if (is_literal(rhs)) return std::string(rhs);
    if (is_literal(lhs)) return std::string(lhs);
    return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

std::string statement_at(const std::vector<python::Statement>& stmts, std::optional<std::int64_t> index) {
    if (!index || *index < 0 || static_cast<std::size_t>(*index) >= stmts.size()) return {};
    return stmts[static_cast<std::size_t>(*index)].text;
}

void fill_sources(BugReport& b, const runner::RunResponse& r, const std::vector<python::Statement>& stmts) {
    auto first = r.first_failed_index;
    auto last = r.last_executed_index;
    if (!last && first) last = *first - 1;
    b.failed_statement = statement_at(stmts, first);
    b.first_failed_source = !r.failed_source.empty() ? r.failed_source : b.failed_statement;
    if (b.first_failed_source.empty()) b.first_failed_source = "<unknown statement>";
    b.last_executed_source = statement_at(stmts, last);
    if (b.last_executed_source.empty()) b.last_executed_source = std::string(kStartOfProgram);
}

std::string joined_error(const runner::RunResponse& r) {
    if (r.message.empty()) return r.stderr_text;
    if (r.stderr_text.empty()) return r.message;
    return r.stderr_text + "\n" + r.message;
}

}  // namespace

std::optional<BugReport> to_bug_report(const runner::RunResponse& r, std::string_view code, const TestSpec& tests) {
    using runner::FailureKind;
    using runner::RunStatus;

    BugReport b;
    b.stderr_raw = r.stderr_text;
    const auto stmts = python::top_level_statements(code);

    switch (r.status) {
        case RunStatus::error:
            b.kind = BugKind::unknown;
            b.stderr_raw = joined_error(r);
            b.note = "runner could not execute the request";
            return b;

        case RunStatus::timeout:
            b.kind = BugKind::runtime;
            fill_sources(b, r, stmts);
            b.note = "statement timed out";
            return b;

        case RunStatus::ok:
            break;
    }

    if (r.passed) {
        if (!tests.empty()) return std::nullopt;
        b.kind = BugKind::unknown;
        b.note = "no tests available; code executed without error";
        return b;
    }

    switch (r.kind) {
        case FailureKind::runtime:
            b.kind = BugKind::runtime;
            fill_sources(b, r, stmts);
            return b;

        case FailureKind::assertion: {
            b.kind = BugKind::assertion;
            b.captured_value_repr = r.captured_value_repr;
            b.last_executed_source = stmts.empty() ? std::string(kStartOfProgram) : stmts.back().text;
            if (!r.failed_source.empty()) b.first_failed_source = r.failed_source;
            std::string_view failing = r.failed_source;
            if (auto e = expected_literal(failing)) {
                b.expected_repr = std::move(e);
            } else if (tests.assertions.size() == 1) {
                b.expected_repr = expected_literal(tests.assertions.front());
            }
            return b;
        }

        case FailureKind::none:
            b.kind = BugKind::unknown;
            b.note = "runner reported failure without a failure kind";
            return b;
    }
    return b;
}

BugReport runner_failure_report(std::string_view error) {
    BugReport b;
    b.kind = BugKind::unknown;
    b.stderr_raw = std::string(error);
    b.note = "runner failure";
    return b;
}

runner::RunRequest make_request(runner::RunMode mode, std::string_view code, const TestSpec& tests,
                                std::string_view imports, double timeout_s) {
    runner::RunRequest req;
    req.mode = mode;
    req.code = std::string(code);
    req.tests = tests.tests_text();
    req.imports = std::string(imports);
    if (!tests.fixtures.empty()) {
        if (!req.imports.empty() && req.imports.back() != '\n') req.imports.push_back('\n');
        req.imports += tests.fixtures;
    }
    req.timeout_s = timeout_s;
    return req;
}

std::optional<BugReport> enrich(std::string_view code, const TestSpec& tests, std::string_view imports,
                                runner::Runner& r, double timeout_s) {
    if (trim(code).empty()) {
        BugReport b;
        b.note = "empty code";
        return b;
    }
    const auto req = make_request(runner::RunMode::localize, code, tests, imports, timeout_s);
    try {
        return to_bug_report(r.run(req), code, tests);
    } catch (const runner::RunnerError& e) {
        return runner_failure_report(e.what());
    }
}

}  // namespace dsrepair::bug
