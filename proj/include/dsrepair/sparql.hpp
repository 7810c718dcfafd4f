// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Basic-graph-pattern subset of SPARQL over the knowledge graph:
//
//   SELECT (?var+ | *) WHERE { <pattern> ( . <pattern> )* [.] }
//
// Terms are `?var`, `ds:` IRIs, double-quoted literals, and (in predicate
// position) bare names from the predicate vocabulary. No FILTER/OPTIONAL.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dsrepair/kg_store.hpp"

namespace dsrepair::kg {

class QuerySyntaxError : public std::runtime_error {
public:
    QuerySyntaxError(std::size_t line, std::size_t column, const std::string& message)
        : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

struct SelectQuery {
    bool select_all = false;
    std::vector<std::string> variables;  // projection, without '?'
    std::vector<TriplePattern> patterns;

    friend bool operator==(const SelectQuery&, const SelectQuery&) = default;
};

SelectQuery parse_select(std::string_view text);

/// Canonical single-line spelling; parse_select(to_string(q)) == q.
std::string to_string(const SelectQuery& q);
std::string to_string(const TriplePattern& p);

/// Nested-loop evaluation of the conjunctive patterns in source order. Each
/// row carries the bindings of every variable in the WHERE clause.
std::vector<Bindings> evaluate_patterns(const KnowledgeGraph& g,
                                        const std::vector<TriplePattern>& patterns);

/// evaluate_patterns() projected onto the SELECT list. Bag semantics.
std::vector<Bindings> execute(const KnowledgeGraph& g, const SelectQuery& q);

/// One line per row: `?a=<value> ?b=<value>` in projection order.
std::string format_rows(const SelectQuery& q, const std::vector<Bindings>& rows);

}  // namespace dsrepair::kg
