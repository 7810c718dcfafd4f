// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/kg_store.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

namespace dsrepair::kg {

namespace {

constexpr std::array<std::string_view, kAllPredicates.size()> kPredicateNames = {
    "has_name",     "has_expression", "has_explanation", "hasParameter",     "hasReturn",
    "hasType",      "hasPosition",    "hasOptional",     "belongsToLibrary", "belongsToModule",
};

std::size_t predicate_slot(Predicate p) { return static_cast<std::size_t>(p); }

bool is_iri_char(unsigned char c) { return c > 0x20 && c != 0x7f; }

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string_view object_kind(const Term& t) {
    return std::holds_alternative<Iri>(t) ? "IRI" : "literal";
}

}  // namespace

std::string_view to_string(Predicate p) noexcept { return kPredicateNames[predicate_slot(p)]; }

std::optional<Predicate> predicate_from_string(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kPredicateNames.size(); ++i) {
        if (kPredicateNames[i] == name) return kAllPredicates[i];
    }
    return std::nullopt;
}

bool is_dependency(Predicate p) noexcept {
    switch (p) {
        case Predicate::belongsToLibrary:
        case Predicate::belongsToModule:
        case Predicate::hasParameter:
        case Predicate::hasReturn:
            return true;
        default:
            return false;
    }
}

// ---------------------------------------------------------------------------

bool Iri::is_valid(std::string_view value) noexcept {
    if (!value.starts_with(kPrefix)) return false;
    auto local = value.substr(kPrefix.size());
    if (local.empty()) return false;
    if (!std::all_of(local.begin(), local.end(),
                     [](char c) { return is_iri_char(static_cast<unsigned char>(c)); })) {
        return false;
    }
    // Segments separated by '.' must be non-empty.
    return local.front() != '.' && local.back() != '.' && local.find("..") == std::string_view::npos;
}

Iri::Iri(std::string value) : value_(std::move(value)) {
    if (!is_valid(value_)) {
        throw ValidationError("iri", "malformed IRI '" + value_ + "'");
    }
}

Iri Iri::from_name(std::string_view qualified_name) {
    return Iri(std::string(kPrefix) + std::string(qualified_name));
}

std::string_view Iri::local_name() const noexcept {
    return std::string_view(value_).substr(kPrefix.size());
}

std::string quote_literal(std::string_view raw) {
    std::string out;
    out.reserve(raw.size() + 2);
    out.push_back('"');
    for (char c : raw) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string to_canonical(const Term& term) {
    return std::visit(overloaded{[](const Iri& i) { return i.str(); },
                                 [](const Literal& l) { return quote_literal(l.value); }},
                      term);
}

std::string to_canonical(const Value& value) {
    return std::visit(overloaded{[](const Iri& i) { return i.str(); },
                                 [](const Literal& l) { return quote_literal(l.value); },
                                 [](Predicate p) { return std::string(to_string(p)); }},
                      value);
}

bool operator<(const Triple& a, const Triple& b) {
    if (a.subject != b.subject) return a.subject < b.subject;
    if (a.predicate != b.predicate) return to_string(a.predicate) < to_string(b.predicate);
    if (a.object.index() != b.object.index()) {
        // Literals ('"') sort before IRIs ("ds:") bytewise.
        return std::holds_alternative<Literal>(a.object);
    }
    if (a.object == b.object) return false;
    return to_canonical(a.object) < to_canonical(b.object);
}

void validate(const Triple& t) {
    const bool wants_iri = is_dependency(t.predicate);
    const bool has_iri = std::holds_alternative<Iri>(t.object);
    if (wants_iri != has_iri) {
        throw ValidationError("object", std::string(to_string(t.predicate)) + " requires an " +
                                            (wants_iri ? "IRI" : "literal") + " object, got " +
                                            std::string(object_kind(t.object)));
    }
    if (!has_iri && t.predicate != Predicate::has_explanation &&
        std::get<Literal>(t.object).value.empty()) {
        throw ValidationError("object", std::string(to_string(t.predicate)) +
                                            " requires a non-empty literal");
    }
}

std::string to_dump_line(const Triple& t) {
    std::string line = t.subject.str();
    line.push_back(' ');
    line += to_string(t.predicate);
    line.push_back(' ');
    line += to_canonical(t.object);
    return line;
}

// ---------------------------------------------------------------------------

namespace {

bool bind_var(Bindings& b, const std::string& name, Value v) {
    auto [it, inserted] = b.try_emplace(name, v);
    return inserted || it->second == v;
}

}  // namespace

std::optional<Bindings> unify(const TriplePattern& p, const Triple& t, const Bindings& seed) {
    Bindings out = seed;

    if (const auto* var = std::get_if<Variable>(&p.subject)) {
        if (!bind_var(out, var->name, t.subject)) return std::nullopt;
    } else if (std::get<Iri>(p.subject) != t.subject) {
        return std::nullopt;
    }

    if (const auto* var = std::get_if<Variable>(&p.predicate)) {
        if (!bind_var(out, var->name, t.predicate)) return std::nullopt;
    } else if (std::get<Predicate>(p.predicate) != t.predicate) {
        return std::nullopt;
    }

    const bool ok = std::visit(
        overloaded{[&](const Variable& var) {
                       Value v = std::holds_alternative<Iri>(t.object)
                                     ? Value(std::get<Iri>(t.object))
                                     : Value(std::get<Literal>(t.object));
                       return bind_var(out, var.name, std::move(v));
                   },
                   [&](const Iri& iri) {
                       const auto* o = std::get_if<Iri>(&t.object);
                       return o != nullptr && *o == iri;
                   },
                   [&](const Literal& lit) {
                       const auto* o = std::get_if<Literal>(&t.object);
                       return o != nullptr && *o == lit;
                   }},
        p.object);
    if (!ok) return std::nullopt;
    return out;
}

// ---------------------------------------------------------------------------

KnowledgeGraph::KnowledgeGraph(const KnowledgeGraph& other)
    : triples_(other.triples_), versions_(other.versions_), frozen_(other.frozen_) {
    rebuild_index();
}

KnowledgeGraph& KnowledgeGraph::operator=(const KnowledgeGraph& other) {
    if (this != &other) {
        triples_ = other.triples_;
        versions_ = other.versions_;
        frozen_ = other.frozen_;
        rebuild_index();
    }
    return *this;
}

void KnowledgeGraph::index(const Triple& t) {
    by_subject_[t.subject.str()].push_back(&t);
    by_predicate_[predicate_slot(t.predicate)].push_back(&t);
}

void KnowledgeGraph::rebuild_index() {
    by_subject_.clear();
    for (auto& v : by_predicate_) v.clear();
    for (const auto& t : triples_) index(t);
}

bool KnowledgeGraph::insert(Triple t) {
    if (frozen_) throw FrozenGraphError();
    validate(t);
    auto [it, inserted] = triples_.insert(std::move(t));
    if (inserted) index(*it);
    return inserted;
}

void KnowledgeGraph::set_library_version(const std::string& library, const std::string& version) {
    if (frozen_) throw FrozenGraphError();
    if (library.empty() || library.find_first_of(" \t\r\n") != std::string::npos) {
        throw ValidationError("library", "library name must be a non-empty token");
    }
    if (version.find_first_of("\r\n") != std::string::npos) {
        throw ValidationError("version", "version text must be a single line");
    }
    versions_[library] = version;
}

void KnowledgeGraph::check_structure() const {
    for (const Triple* t : by_predicate_[predicate_slot(Predicate::hasParameter)]) {
        TriplePattern expr{t->subject, Predicate::has_expression, Variable{"e"}};
        if (query(expr).empty()) {
            throw ValidationError("subject", t->subject.str() +
                                                 " has parameters but no has_expression triple");
        }
    }
}

void KnowledgeGraph::freeze() {
    if (frozen_) return;
    check_structure();
    frozen_ = true;
}

std::vector<Match> KnowledgeGraph::query(const TriplePattern& p, const Bindings& seed) const {
    // Substitute seeded variables so that bound subjects/predicates hit an index.
    const std::vector<const Triple*>* candidates = nullptr;
    std::optional<std::string> subject_key;
    std::optional<Predicate> predicate_key;

    if (const auto* iri = std::get_if<Iri>(&p.subject)) {
        subject_key = iri->str();
    } else if (auto it = seed.find(std::get<Variable>(p.subject).name); it != seed.end()) {
        if (const auto* iri = std::get_if<Iri>(&it->second)) {
            subject_key = iri->str();
        } else {
            return {};
        }
    }
    if (const auto* pred = std::get_if<Predicate>(&p.predicate)) {
        predicate_key = *pred;
    } else if (auto it = seed.find(std::get<Variable>(p.predicate).name); it != seed.end()) {
        if (const auto* pred = std::get_if<Predicate>(&it->second)) {
            predicate_key = *pred;
        } else {
            return {};
        }
    }

    std::vector<const Triple*> all;
    if (subject_key) {
        auto it = by_subject_.find(*subject_key);
        if (it == by_subject_.end()) return {};
        candidates = &it->second;
    } else if (predicate_key) {
        candidates = &by_predicate_[predicate_slot(*predicate_key)];
    } else {
        all.reserve(triples_.size());
        for (const auto& t : triples_) all.push_back(&t);
        candidates = &all;
    }

    std::vector<Match> out;
    for (const Triple* t : *candidates) {
        if (auto b = unify(p, *t, seed)) out.push_back(Match{std::move(*b), *t});
    }
    std::sort(out.begin(), out.end(),
              [](const Match& a, const Match& b) { return a.triple < b.triple; });
    return out;
}

// ---------------------------------------------------------------------------

std::string save_dump(const KnowledgeGraph& g) {
    std::string out;
    for (const auto& [library, version] : g.library_versions()) {
        out += "# library=" + library + " version=" + version + "\n";
    }
    for (const auto& t : g.triples()) {
        out += to_dump_line(t);
        out.push_back('\n');
    }
    return out;
}

namespace {

Literal parse_literal(std::string_view text, std::size_t line_no) {
    if (text.size() < 2 || text.front() != '"' || text.back() != '"') {
        throw DumpParseError(line_no, "object must be a quoted literal or a ds: IRI");
    }
    std::string value;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
        char c = text[i];
        if (c == '"') throw DumpParseError(line_no, "unescaped '\"' inside literal");
        if (c != '\\') {
            value.push_back(c);
            continue;
        }
        if (i + 2 >= text.size()) throw DumpParseError(line_no, "dangling escape in literal");
        switch (text[++i]) {
            case '"': value.push_back('"'); break;
            case '\\': value.push_back('\\'); break;
            case 'n': value.push_back('\n'); break;
            case 'r': value.push_back('\r'); break;
            case 't': value.push_back('\t'); break;
            default: throw DumpParseError(line_no, "unknown escape in literal");
        }
    }
    return Literal{std::move(value)};
}

void parse_header(std::string_view line, std::size_t line_no, KnowledgeGraph& g) {
    constexpr std::string_view kLib = "# library=";
    if (!line.starts_with(kLib)) return;  // plain comment
    auto rest = line.substr(kLib.size());
    auto sep = rest.find(" version=");
    if (sep == std::string_view::npos) {
        throw DumpParseError(line_no, "library header lacks version=");
    }
    try {
        g.set_library_version(std::string(rest.substr(0, sep)),
                              std::string(rest.substr(sep + std::string_view(" version=").size())));
    } catch (const ValidationError& e) {
        throw DumpParseError(line_no, e.what());
    }
}

}  // namespace

KnowledgeGraph load_dump(std::string_view text) {
    KnowledgeGraph g;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            parse_header(line, line_no, g);
            continue;
        }

        auto s1 = line.find(' ');
        auto s2 = s1 == std::string_view::npos ? s1 : line.find(' ', s1 + 1);
        if (s2 == std::string_view::npos) {
            throw DumpParseError(line_no, "expected '<subject> <predicate> <object>'");
        }
        auto subject = line.substr(0, s1);
        auto predicate = line.substr(s1 + 1, s2 - s1 - 1);
        auto object = line.substr(s2 + 1);

        auto pred = predicate_from_string(predicate);
        if (!pred) throw DumpParseError(line_no, "unknown predicate '" + std::string(predicate) + "'");
        try {
            Term obj = object.starts_with(Iri::kPrefix) ? Term(Iri(std::string(object)))
                                                        : Term(parse_literal(object, line_no));
            g.insert(Triple{Iri(std::string(subject)), *pred, std::move(obj)});
        } catch (const ValidationError& e) {
            throw DumpParseError(line_no, e.what());
        }
    }
    try {
        g.freeze();
    } catch (const ValidationError& e) {
        throw DumpParseError(line_no, e.what());
    }
    return g;
}

}  // namespace dsrepair::kg
