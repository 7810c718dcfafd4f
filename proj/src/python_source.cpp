// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/python_source.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

namespace dsrepair::python {

namespace {

struct Span {
    std::size_t begin;
    std::size_t end;  // exclusive, excludes the terminating newline
};

struct Scan {
    std::string masked;
    std::vector<Span> logical_lines;
};

Scan scan(std::string_view code) {
    Scan out;
    out.masked.assign(code.begin(), code.end());
    std::string& m = out.masked;

    enum class State { normal, comment, string };
    State state = State::normal;
    char quote = 0;
    bool triple = false;
    int depth = 0;
    std::size_t line_begin = 0;

    auto end_line = [&](std::size_t nl) {
        out.logical_lines.push_back({line_begin, nl});
        line_begin = nl + 1;
    };

    for (std::size_t i = 0; i < code.size(); ++i) {
        const char c = code[i];
        switch (state) {
            case State::comment:
                if (c == '\n') {
                    state = State::normal;
                    if (depth == 0) end_line(i);
                } else {
                    m[i] = ' ';
                }
                break;

            case State::string:
                if (c == '\\' && i + 1 < code.size()) {
                    m[i] = ' ';
                    if (code[i + 1] != '\n') m[i + 1] = ' ';
                    ++i;
                } else if (c == quote) {
                    if (!triple) {
                        state = State::normal;
                    } else if (i + 2 < code.size() && code[i + 1] == quote && code[i + 2] == quote) {
                        i += 2;
                        state = State::normal;
                    } else {
                        m[i] = ' ';
                    }
                } else if (c == '\n') {
                    // An unterminated single-quoted string ends at the newline.
                    if (!triple) {
                        state = State::normal;
                        if (depth == 0) end_line(i);
                    }
                } else {
                    m[i] = ' ';
                }
                break;

            case State::normal:
                if (c == '#') {
                    state = State::comment;
                    m[i] = ' ';
                } else if (c == '"' || c == '\'') {
                    quote = c;
                    triple = i + 2 < code.size() && code[i + 1] == c && code[i + 2] == c;
                    if (triple) i += 2;
                    state = State::string;
                } else if (c == '(' || c == '[' || c == '{') {
                    ++depth;
                } else if (c == ')' || c == ']' || c == '}') {
                    depth = std::max(0, depth - 1);
                } else if (c == '\n') {
                    const bool continued = i > 0 && code[i - 1] == '\\';
                    if (depth == 0 && !continued) end_line(i);
                }
                break;
        }
    }
    if (line_begin < code.size()) out.logical_lines.push_back({line_begin, code.size()});
    return out;
}

constexpr std::array<std::string_view, 35> kKeywords = {
    "False",  "None",   "True",    "and",      "as",       "assert", "async",
    "await",  "break",  "class",   "continue", "def",      "del",    "elif",
    "else",   "except", "finally", "for",      "from",     "global", "if",
    "import", "in",     "is",      "lambda",   "nonlocal", "not",    "or",
    "pass",   "raise",  "return",  "try",      "while",    "with",   "yield",
};

std::string_view first_word(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    return s.substr(0, i);
}

bool starts_compound(std::string_view content) {
    if (content.starts_with('@')) return true;
    const auto w = first_word(content);
    return w == "if" || w == "for" || w == "while" || w == "with" || w == "def" || w == "class" ||
           w == "try" || w == "async";
}

bool is_clause_continuation(std::string_view content) {
    const auto w = first_word(content);
    return w == "elif" || w == "else" || w == "except" || w == "finally";
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::size_t line_of(std::string_view code, std::size_t offset) {
    return 1 + static_cast<std::size_t>(std::count(code.begin(), code.begin() + offset, '\n'));
}

}  // namespace

std::string mask_strings_and_comments(std::string_view code) { return scan(code).masked; }

bool is_keyword(std::string_view word) noexcept {
    return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Statement> top_level_statements(std::string_view code) {
    const Scan s = scan(code);
    std::string_view masked = s.masked;

    struct Group {
        std::size_t begin;
        std::size_t end;
        bool decorators_only;
    };
    std::vector<Statement> out;

    auto flush = [&](const Group& g) {
        auto text = trim(code.substr(g.begin, g.end - g.begin));
        if (!text.empty()) {
            auto offset = static_cast<std::size_t>(text.data() - code.data());
            out.push_back({std::string(text), line_of(code, offset)});
        }
    };

    std::optional<Group> current;
    for (const auto& ln : s.logical_lines) {
        auto masked_line = masked.substr(ln.begin, ln.end - ln.begin);
        auto content = trim(masked_line);
        if (content.empty()) continue;  // blank or comment-only
        const bool indented = std::isspace(static_cast<unsigned char>(masked_line.front())) != 0;

        if (current && (indented || is_clause_continuation(content) || current->decorators_only)) {
            current->end = ln.end;
            current->decorators_only = current->decorators_only && content.starts_with('@');
            continue;
        }
        if (current) flush(*current);
        current.reset();

        if (starts_compound(content)) {
            current = Group{ln.begin, ln.end, content.starts_with('@')};
            continue;
        }

        // Simple statement line: split on top-level ';'.
        int depth = 0;
        std::size_t piece = ln.begin;
        for (std::size_t i = ln.begin; i < ln.end; ++i) {
            char c = masked[i];
            if (c == '(' || c == '[' || c == '{') ++depth;
            if (c == ')' || c == ']' || c == '}') depth = std::max(0, depth - 1);
            if (c == ';' && depth == 0) {
                flush(Group{piece, i, false});
                piece = i + 1;
            }
        }
        current = Group{piece, ln.end, false};
    }
    if (current) flush(*current);
    return out;
}

}  // namespace dsrepair::python
