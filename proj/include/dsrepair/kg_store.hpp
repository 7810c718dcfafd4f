// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// In-memory triple store for the data-science API knowledge graph.
//
// The store follows a build-then-freeze contract: a single writer inserts
// triples during ingestion, then calls freeze(). A frozen graph rejects
// further mutation and may be read concurrently without synchronisation.

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace dsrepair::kg {

class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class FrozenGraphError : public std::logic_error {
public:
    FrozenGraphError() : std::logic_error("knowledge graph is frozen") {}
};

class DumpParseError : public std::runtime_error {
public:
    DumpParseError(std::size_t line, const std::string& message)
        : std::runtime_error("dump line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Closed predicate vocabulary. Enumerator order is not the sort order; triples
// sort by predicate *name*.
enum class Predicate {
    has_name,
    has_expression,
    has_explanation,
    hasParameter,
    hasReturn,
    hasType,
    hasPosition,
    hasOptional,
    belongsToLibrary,
    belongsToModule,
};

inline constexpr std::array<Predicate, 10> kAllPredicates = {
    Predicate::has_name,     Predicate::has_expression, Predicate::has_explanation,
    Predicate::hasParameter, Predicate::hasReturn,      Predicate::hasType,
    Predicate::hasPosition,  Predicate::hasOptional,    Predicate::belongsToLibrary,
    Predicate::belongsToModule,
};

std::string_view to_string(Predicate p) noexcept;
std::optional<Predicate> predicate_from_string(std::string_view name) noexcept;

/// Dependency predicates link two entities; the rest attach literal attributes.
bool is_dependency(Predicate p) noexcept;

/// Entity identifier of the form `ds:<segment>(.<segment>)*`.
class Iri {
public:
    static constexpr std::string_view kPrefix = "ds:";

    explicit Iri(std::string value);

    /// Builds `ds:<qualified_name>`.
    static Iri from_name(std::string_view qualified_name);
    static bool is_valid(std::string_view value) noexcept;

    const std::string& str() const noexcept { return value_; }
    /// Text after the `ds:` prefix.
    std::string_view local_name() const noexcept;

    friend auto operator<=>(const Iri&, const Iri&) = default;
    friend bool operator==(const Iri&, const Iri&) = default;

private:
    std::string value_;
};

struct Literal {
    std::string value;

    friend auto operator<=>(const Literal&, const Literal&) = default;
    friend bool operator==(const Literal&, const Literal&) = default;
};

using Term = std::variant<Iri, Literal>;

/// Dump/query spelling: IRIs verbatim, literals double-quoted with escapes.
std::string to_canonical(const Term& term);
std::string quote_literal(std::string_view raw);

struct Triple {
    Iri subject;
    Predicate predicate;
    Term object;

    friend bool operator==(const Triple&, const Triple&) = default;
};

/// Orders by (subject, predicate name, canonical object), which coincides with
/// the bytewise order of dump lines.
bool operator<(const Triple& a, const Triple& b);

/// Throws ValidationError naming the offending field ("object" or "predicate").
void validate(const Triple& t);

std::string to_dump_line(const Triple& t);

// ---------------------------------------------------------------------------
// Patterns

struct Variable {
    std::string name;  // without the leading '?'

    friend bool operator==(const Variable&, const Variable&) = default;
};

using SubjectSlot = std::variant<Variable, Iri>;
using PredicateSlot = std::variant<Variable, Predicate>;
using ObjectSlot = std::variant<Variable, Iri, Literal>;

struct TriplePattern {
    SubjectSlot subject;
    PredicateSlot predicate;
    ObjectSlot object;

    friend bool operator==(const TriplePattern&, const TriplePattern&) = default;
};

/// A value a variable can be bound to.
using Value = std::variant<Iri, Literal, Predicate>;
std::string to_canonical(const Value& value);

using Bindings = std::map<std::string, Value>;

struct Match {
    Bindings bindings;
    Triple triple;
};

/// Unifies `p` with `t` under existing bindings; returns the extended bindings.
std::optional<Bindings> unify(const TriplePattern& p, const Triple& t, const Bindings& seed = {});

// ---------------------------------------------------------------------------

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(const KnowledgeGraph& other);
    KnowledgeGraph& operator=(const KnowledgeGraph& other);
    KnowledgeGraph(KnowledgeGraph&&) noexcept = default;
    KnowledgeGraph& operator=(KnowledgeGraph&&) noexcept = default;

    /// Returns false when the triple was already present.
    bool insert(Triple t);

    void set_library_version(const std::string& library, const std::string& version);
    const std::map<std::string, std::string>& library_versions() const noexcept {
        return versions_;
    }

    /// Checks graph-level invariants and rejects further mutation.
    void freeze();
    bool frozen() const noexcept { return frozen_; }

    std::size_t size() const noexcept { return triples_.size(); }
    bool empty() const noexcept { return triples_.empty(); }
    bool contains(const Triple& t) const { return triples_.contains(t); }
    const std::set<Triple>& triples() const noexcept { return triples_; }

    /// All triples unifying with `p`, sorted by triple order.
    std::vector<Match> query(const TriplePattern& p, const Bindings& seed = {}) const;

    friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
        return a.triples_ == b.triples_ && a.versions_ == b.versions_;
    }

private:
    void index(const Triple& t);
    void rebuild_index();
    void check_structure() const;

    std::set<Triple> triples_;
    std::unordered_map<std::string, std::vector<const Triple*>> by_subject_;
    std::array<std::vector<const Triple*>, kAllPredicates.size()> by_predicate_{};
    std::map<std::string, std::string> versions_;
    bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Dump format: `# library=<name> version=<text>` header lines, then one
// `<subject> <predicate> <object>` line per triple, sorted bytewise.

std::string save_dump(const KnowledgeGraph& g);
/// The returned graph is frozen.
KnowledgeGraph load_dump(std::string_view text);

}  // namespace dsrepair::kg
