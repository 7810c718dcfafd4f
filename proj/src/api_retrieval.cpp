// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/api_retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "dsrepair/python_source.hpp"
#include "dsrepair/sparql.hpp"

namespace dsrepair::retrieval {

using kg::Iri;
using kg::Literal;
using kg::Predicate;
using kg::TriplePattern;
using kg::Variable;

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

bool is_dotted_name(std::string_view s) {
    if (s.empty()) return false;
    for (auto part : split(s, '.')) {
        if (part.empty() || !ident_start(part.front()) ||
            !std::all_of(part.begin(), part.end(), ident_char)) {
            return false;
        }
    }
    return true;
}

// Collapses a masked logical line to one physical line (from-import lists may
// span lines inside parentheses).
std::string flatten(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(c == '\n' || c == '\\' ? ' ' : c);
    return out;
}

void harvest_imports(std::string_view masked, ImportMap& map) {
    static const std::regex import_re(R"(^\s*import\s+(.+)$)");
    static const std::regex from_re(R"(^\s*from\s+([A-Za-z_][\w.]*)\s+import\s+(.+)$)");

    for (const auto& stmt : python::top_level_statements(masked)) {
        // Nested imports (inside functions, try blocks) bind names too.
        std::istringstream lines(stmt.text);
        std::string joined;
        std::string line;
        int depth = 0;
        std::vector<std::string> logical;
        while (std::getline(lines, line)) {
            for (char c : line) {
                if (c == '(') ++depth;
                if (c == ')') depth = std::max(0, depth - 1);
            }
            joined += line + " ";
            if (depth == 0 && !(line.size() && line.back() == '\\')) {
                logical.push_back(flatten(joined));
                joined.clear();
            }
        }
        if (!joined.empty()) logical.push_back(flatten(joined));

        for (auto& l : logical) {
            for (auto piece : split(l, ';')) {
                std::string p(piece);
                std::smatch m;
                if (std::regex_match(p, m, from_re)) {
                    const std::string module = m[1].str();
                    std::string names = m[2].str();
                    std::erase(names, '(');
                    std::erase(names, ')');
                    for (auto item : split(names, ',')) {
                        auto parts = split(trim(item), ' ');
                        std::vector<std::string_view> words;
                        for (auto w : parts) {
                            if (!w.empty()) words.push_back(w);
                        }
                        if (words.empty() || words[0] == "*") continue;
                        if (!is_dotted_name(words[0])) continue;
                        std::string local(words[0]);
                        if (words.size() == 3 && words[1] == "as") local = std::string(words[2]);
                        map.aliases[local] = module + "." + std::string(words[0]);
                    }
                } else if (std::regex_match(p, m, import_re)) {
                    const std::string targets = m[1].str();
                    for (auto item : split(targets, ',')) {
                        std::vector<std::string_view> words;
                        for (auto w : split(trim(item), ' ')) {
                            if (!w.empty()) words.push_back(w);
                        }
                        if (words.empty() || !is_dotted_name(words[0])) continue;
                        std::string target(words[0]);
                        if (words.size() == 3 && words[1] == "as") {
                            map.aliases[std::string(words[2])] = target;
                        } else {
                            // `import a.b` binds `a`.
                            auto root = target.substr(0, target.find('.'));
                            map.aliases[root] = root;
                        }
                    }
                }
            }
        }
    }
}

std::size_t line_at(std::string_view text, std::size_t offset) {
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

}  // namespace

std::optional<std::string> ImportMap::resolve(std::string_view chain) const {
    auto dot = chain.find('.');
    auto root = chain.substr(0, dot);
    auto it = aliases.find(std::string(root));
    if (it == aliases.end()) return std::nullopt;
    if (dot == std::string_view::npos) return it->second;
    return it->second + std::string(chain.substr(dot));
}

Extraction extract_invocations(std::string_view code, std::string_view preamble) {
    Extraction out;
    if (!preamble.empty()) harvest_imports(python::mask_strings_and_comments(preamble), out.imports);
    const std::string masked = python::mask_strings_and_comments(code);
    harvest_imports(masked, out.imports);

    std::set<std::string> seen;
    std::string_view m = masked;
    std::size_t i = 0;
    std::string prev_word;  // last identifier before the current position
    while (i < m.size()) {
        if (!ident_start(m[i]) || (i > 0 && ident_char(m[i - 1]))) {
            if (!std::isspace(static_cast<unsigned char>(m[i]))) prev_word.clear();
            ++i;
            continue;
        }
        const std::size_t start = i;

        // Preceding non-space char '.' means a method on an expression result.
        std::size_t back = start;
        while (back > 0 && (m[back - 1] == ' ' || m[back - 1] == '\t')) --back;
        const bool after_dot = back > 0 && m[back - 1] == '.';

        // Consume identifier ( . identifier )*
        std::size_t j = i;
        std::vector<std::string_view> parts;
        for (;;) {
            std::size_t k = j;
            while (k < m.size() && ident_char(m[k])) ++k;
            parts.push_back(m.substr(j, k - j));
            std::size_t p = k;
            while (p < m.size() && (m[p] == ' ' || m[p] == '\t')) ++p;
            if (p < m.size() && m[p] == '.') {
                std::size_t q = p + 1;
                while (q < m.size() && (m[q] == ' ' || m[q] == '\t')) ++q;
                if (q < m.size() && ident_start(m[q])) {
                    j = q;
                    continue;
                }
            }
            j = k;
            break;
        }
        std::size_t p = j;
        while (p < m.size() && (m[p] == ' ' || m[p] == '\t')) ++p;
        const bool is_call = p < m.size() && m[p] == '(';

        const std::string head(parts.front());
        const bool definition = prev_word == "def" || prev_word == "class";
        if (is_call && !after_dot && !definition && !python::is_keyword(head)) {
            std::string raw;
            for (std::size_t n = 0; n < parts.size(); ++n) {
                if (n) raw.push_back('.');
                raw += parts[n];
            }
            ApiInvocation inv;
            inv.raw_chain = raw;
            inv.source_line = line_at(code, start);
            if (auto q = out.imports.resolve(raw)) {
                inv.qualified_name = *q;
                inv.resolved = true;
            } else {
                inv.qualified_name = raw;
            }
            if (seen.insert(inv.qualified_name).second) out.invocations.push_back(std::move(inv));
        }
        prev_word = parts.size() == 1 ? head : std::string();
        i = j;
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(RichnessLevel level) noexcept {
    switch (level) {
        case RichnessLevel::expression_only: return "expression_only";
        case RichnessLevel::plus_explanation: return "plus_explanation";
        case RichnessLevel::plus_params_returns: return "plus_params_returns";
        case RichnessLevel::plus_both: return "plus_both";
    }
    return "expression_only";
}

std::optional<RichnessLevel> richness_from_string(std::string_view name) noexcept {
    for (auto level : kAllRichnessLevels) {
        if (to_string(level) == name) return level;
    }
    return std::nullopt;
}

std::string_view to_string(RetrievalScope scope) noexcept {
    switch (scope) {
        case RetrievalScope::all: return "all";
        case RetrievalScope::failing_first: return "failing_first";
        case RetrievalScope::failing_only: return "failing_only";
    }
    return "all";
}

std::optional<RetrievalScope> scope_from_string(std::string_view name) noexcept {
    for (auto s : {RetrievalScope::all, RetrievalScope::failing_first, RetrievalScope::failing_only}) {
        if (to_string(s) == name) return s;
    }
    return std::nullopt;
}

std::string ApiKnowledge::render() const {
    std::string out;
    for (const auto& block : blocks) {
        for (const auto& s : block.sentences) {
            out += s;
            out.push_back('\n');
        }
    }
    if (!out.empty()) out.pop_back();
    return out;
}

namespace {

std::string literal_of(const kg::Bindings& row, const std::string& var) {
    auto it = row.find(var);
    if (it == row.end()) return {};
    if (const auto* lit = std::get_if<Literal>(&it->second)) return lit->value;
    return {};
}

std::string first_literal(const kg::KnowledgeGraph& g, const Iri& subject, Predicate p) {
    kg::SelectQuery q;
    q.variables = {"v"};
    q.patterns = {TriplePattern{subject, p, Variable{"v"}}};
    auto rows = kg::execute(g, q);
    return rows.empty() ? std::string() : literal_of(rows.front(), "v");
}

unsigned long parse_index(const std::string& s) {
    try {
        return std::stoul(s);
    } catch (...) {
        return 0;
    }
}

std::string suffix_after(std::string_view local, std::string_view marker) {
    auto pos = local.rfind(marker);
    return pos == std::string_view::npos ? std::string(local)
                                         : std::string(local.substr(pos + marker.size()));
}

}  // namespace

std::optional<KnowledgeBlock> retrieve(const kg::KnowledgeGraph& g, const ApiInvocation& inv,
                                       RichnessLevel level) {
    if (!Iri::is_valid(std::string(Iri::kPrefix) + inv.qualified_name)) return std::nullopt;
    const Iri api = Iri::from_name(inv.qualified_name);
    const std::string& name = inv.qualified_name;

    const std::string expression = first_literal(g, api, Predicate::has_expression);
    if (expression.empty()) return std::nullopt;

    KnowledgeBlock block{name, {}};
    block.sentences.push_back("The full expression of API `" + name + "` is `" + expression + "`.");

    const bool explanation = level == RichnessLevel::plus_explanation || level == RichnessLevel::plus_both;
    const bool params = level == RichnessLevel::plus_params_returns || level == RichnessLevel::plus_both;

    if (explanation) {
        auto text = first_literal(g, api, Predicate::has_explanation);
        if (!text.empty()) block.sentences.push_back("The explanation of API `" + name + "` is: " + text);
    }
    if (!params) return block;

    // SELECT ?p ?t ?pos ?opt ?e WHERE { api hasParameter ?p . ?p hasType ?t .
    //   ?p hasPosition ?pos . ?p hasOptional ?opt . ?p has_explanation ?e }
    kg::SelectQuery pq;
    pq.variables = {"p", "t", "pos", "opt", "e"};
    pq.patterns = {
        TriplePattern{api, Predicate::hasParameter, Variable{"p"}},
        TriplePattern{Variable{"p"}, Predicate::hasType, Variable{"t"}},
        TriplePattern{Variable{"p"}, Predicate::hasPosition, Variable{"pos"}},
        TriplePattern{Variable{"p"}, Predicate::hasOptional, Variable{"opt"}},
        TriplePattern{Variable{"p"}, Predicate::has_explanation, Variable{"e"}},
    };
    auto param_rows = kg::execute(g, pq);
    std::stable_sort(param_rows.begin(), param_rows.end(), [](const auto& a, const auto& b) {
        return parse_index(literal_of(a, "pos")) < parse_index(literal_of(b, "pos"));
    });
    for (const auto& row : param_rows) {
        const auto& pid = std::get<Iri>(row.at("p"));
        const std::string pname = suffix_after(pid.local_name(), "_parameter_");
        std::string s = "Parameter `" + pname + "` of API `" + name + "` is " +
                        (literal_of(row, "opt") == "true" ? "optional" : "required") +
                        ", at position " + literal_of(row, "pos") + ", with type `" +
                        literal_of(row, "t") + "`.";
        if (auto e = literal_of(row, "e"); !e.empty()) s += " Explanation: " + e;
        block.sentences.push_back(std::move(s));
    }

    kg::SelectQuery rq;
    rq.variables = {"r", "t", "e"};
    rq.patterns = {
        TriplePattern{api, Predicate::hasReturn, Variable{"r"}},
        TriplePattern{Variable{"r"}, Predicate::hasType, Variable{"t"}},
        TriplePattern{Variable{"r"}, Predicate::has_explanation, Variable{"e"}},
    };
    auto return_rows = kg::execute(g, rq);
    auto return_index = [](const kg::Bindings& row) {
        return parse_index(suffix_after(std::get<Iri>(row.at("r")).local_name(), "_return_"));
    };
    std::stable_sort(return_rows.begin(), return_rows.end(),
                     [&](const auto& a, const auto& b) { return return_index(a) < return_index(b); });
    for (const auto& row : return_rows) {
        std::string s = "Return value " + std::to_string(return_index(row)) + " of API `" + name +
                        "` has type `" + literal_of(row, "t") + "`.";
        if (auto e = literal_of(row, "e"); !e.empty()) s += " Explanation: " + e;
        block.sentences.push_back(std::move(s));
    }
    return block;
}

std::vector<ApiInvocation> select_invocations(const Extraction& extraction,
                                              std::string_view failing_source,
                                              RetrievalScope scope) {
    if (scope == RetrievalScope::all || trim(failing_source).empty()) return extraction.invocations;

    // Resolve the failing node's chains through the snippet's imports.
    std::set<std::string> failing;
    Extraction local = extract_invocations(failing_source);
    for (const auto& inv : local.invocations) {
        failing.insert(extraction.imports.resolve(inv.raw_chain).value_or(inv.raw_chain));
    }

    std::vector<ApiInvocation> first;
    std::vector<ApiInvocation> rest;
    for (const auto& inv : extraction.invocations) {
        (failing.contains(inv.qualified_name) ? first : rest).push_back(inv);
    }
    if (scope == RetrievalScope::failing_first) first.insert(first.end(), rest.begin(), rest.end());
    return first;
}

ApiKnowledge retrieve_all(const kg::KnowledgeGraph& g, std::span<const ApiInvocation> invocations,
                          RichnessLevel level) {
    ApiKnowledge out;
    for (const auto& inv : invocations) {
        if (auto block = retrieve(g, inv, level)) {
            out.blocks.push_back(std::move(*block));
        } else {
            out.unresolved.push_back(inv.qualified_name);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> whitespace_tokens(std::string_view doc) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < doc.size()) {
        while (i < doc.size() && std::isspace(static_cast<unsigned char>(doc[i]))) ++i;
        std::size_t j = i;
        while (j < doc.size() && !std::isspace(static_cast<unsigned char>(doc[j]))) ++j;
        if (j > i) out.push_back(doc.substr(i, j - i));
        i = j;
    }
    return out;
}

// True when `token` mentions `keyword` as a whole dotted name, e.g.
// "`numpy.flipud(m)`," matches "numpy.flipud" but "numpy.flipudx" does not.
bool token_mentions(std::string_view token, std::string_view keyword) {
    std::size_t from = 0;
    while ((from = token.find(keyword, from)) != std::string_view::npos) {
        const bool left_ok = from == 0 || !(ident_char(token[from - 1]) || token[from - 1] == '.');
        const std::size_t r = from + keyword.size();
        bool right_ok = r == token.size() || !ident_char(token[r]);
        if (right_ok && r < token.size() && token[r] == '.') {
            right_ok = r + 1 == token.size() || !ident_char(token[r + 1]);
        }
        if (left_ok && right_ok) return true;
        ++from;
    }
    return false;
}

}  // namespace

std::vector<std::string> retrieve_plain_text(std::span<const std::string> documents,
                                             std::string_view keyword, std::size_t window) {
    std::vector<std::string> out;
    if (keyword.empty() || window == 0) return out;
    for (const auto& doc : documents) {
        const auto tokens = whitespace_tokens(doc);
        auto hit = std::find_if(tokens.begin(), tokens.end(),
                                [&](std::string_view t) { return token_mentions(t, keyword); });
        if (hit == tokens.end()) continue;

        const std::size_t n = tokens.size();
        const std::size_t k = static_cast<std::size_t>(hit - tokens.begin());
        const std::size_t half = window / 2;
        std::size_t start = k > half ? k - half : 0;
        if (n >= window) start = std::min(start, n - window);
        else start = 0;
        const std::size_t end = std::min(n, start + window);

        std::string text;
        for (std::size_t i = start; i < end; ++i) {
            if (i > start) text.push_back(' ');
            text += tokens[i];
        }
        out.push_back(std::move(text));
    }
    return out;
}

ApiKnowledge retrieve_plain_text_all(std::span<const std::string> documents,
                                     std::span<const ApiInvocation> invocations, std::size_t window) {
    ApiKnowledge out;
    for (const auto& inv : invocations) {
        auto windows = retrieve_plain_text(documents, inv.qualified_name, window);
        if (windows.empty()) {
            out.unresolved.push_back(inv.qualified_name);
        } else {
            out.blocks.push_back({inv.qualified_name, std::move(windows)});
        }
    }
    return out;
}

std::vector<std::string> load_text_corpus(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> docs;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        docs.push_back(buf.str());
    }
    return docs;
}

}  // namespace dsrepair::retrieval
