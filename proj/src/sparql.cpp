// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/sparql.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace dsrepair::kg {

namespace {

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

enum class Tok { word, variable, iri, literal, lbrace, rbrace, dot, star, end };

struct Token {
    Tok kind;
    std::string text;  // unescaped literal value, variable name without '?'
    std::size_t line;
    std::size_t column;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            if (pos_ >= src_.size()) {
                out.push_back({Tok::end, "", line_, col_});
                return out;
            }
            const std::size_t line = line_;
            const std::size_t col = col_;
            char c = src_[pos_];
            if (c == '{') {
                advance();
                out.push_back({Tok::lbrace, "{", line, col});
            } else if (c == '}') {
                advance();
                out.push_back({Tok::rbrace, "}", line, col});
            } else if (c == '.') {
                advance();
                out.push_back({Tok::dot, ".", line, col});
            } else if (c == '*') {
                advance();
                out.push_back({Tok::star, "*", line, col});
            } else if (c == '?') {
                advance();
                std::string name;
                while (pos_ < src_.size() && is_name_char(src_[pos_])) name.push_back(advance());
                if (name.empty()) throw QuerySyntaxError(line, col, "empty variable name");
                out.push_back({Tok::variable, std::move(name), line, col});
            } else if (c == '"') {
                out.push_back({Tok::literal, read_literal(), line, col});
            } else if (src_.substr(pos_).starts_with(Iri::kPrefix)) {
                read_iri(out, line, col);
            } else if (is_name_char(c)) {
                std::string word;
                while (pos_ < src_.size() && is_name_char(src_[pos_])) word.push_back(advance());
                out.push_back({Tok::word, std::move(word), line, col});
            } else {
                throw QuerySyntaxError(line, col, std::string("unexpected character '") + c + "'");
            }
        }
    }

private:
    char advance() {
        char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    std::string read_literal() {
        const std::size_t line = line_;
        const std::size_t col = col_;
        advance();  // opening quote
        std::string value;
        for (;;) {
            if (pos_ >= src_.size()) throw QuerySyntaxError(line, col, "unterminated literal");
            char c = advance();
            if (c == '"') return value;
            if (c == '\n') throw QuerySyntaxError(line, col, "newline inside literal");
            if (c != '\\') {
                value.push_back(c);
                continue;
            }
            if (pos_ >= src_.size()) throw QuerySyntaxError(line, col, "unterminated literal");
            char e = advance();
            switch (e) {
                case '"': value.push_back('"'); break;
                case '\\': value.push_back('\\'); break;
                case 'n': value.push_back('\n'); break;
                case 'r': value.push_back('\r'); break;
                case 't': value.push_back('\t'); break;
                default:
                    throw QuerySyntaxError(line_, col_ - 1, std::string("unknown escape '\\") + e + "'");
            }
        }
    }

    // IRIs run to whitespace or a brace; a trailing '.' is the pattern separator.
    void read_iri(std::vector<Token>& out, std::size_t line, std::size_t col) {
        std::string iri;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (std::isspace(static_cast<unsigned char>(c)) || c == '{' || c == '}') break;
            iri.push_back(advance());
        }
        std::size_t trailing_dots = 0;
        while (!iri.empty() && iri.back() == '.') {
            iri.pop_back();
            ++trailing_dots;
        }
        if (!Iri::is_valid(iri)) throw QuerySyntaxError(line, col, "malformed IRI '" + iri + "'");
        out.push_back({Tok::iri, iri, line, col});
        for (std::size_t i = 0; i < trailing_dots; ++i) {
            out.push_back({Tok::dot, ".", line, col + iri.size() + i});
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    SelectQuery run() {
        SelectQuery q;
        expect_word("SELECT");
        if (peek().kind == Tok::star) {
            next();
            q.select_all = true;
        } else {
            while (peek().kind == Tok::variable) q.variables.push_back(next().text);
            if (q.variables.empty()) fail(peek(), "expected '*' or at least one variable");
        }
        expect_word("WHERE");
        expect(Tok::lbrace, "'{'");
        q.patterns.push_back(pattern());
        for (;;) {
            if (peek().kind == Tok::rbrace) break;
            expect(Tok::dot, "'.' or '}'");
            if (peek().kind == Tok::rbrace) break;  // trailing separator
            q.patterns.push_back(pattern());
        }
        next();
        if (peek().kind != Tok::end) fail(peek(), "unexpected input after '}'");

        std::set<std::string> in_where;
        for (const auto& p : q.patterns) collect(p, in_where);
        for (const auto& v : q.variables) {
            if (!in_where.contains(v)) {
                throw QuerySyntaxError(toks_.front().line, toks_.front().column,
                                       "projected variable ?" + v + " does not occur in WHERE");
            }
        }
        return q;
    }

private:
    static void collect(const TriplePattern& p, std::set<std::string>& out) {
        if (auto* v = std::get_if<Variable>(&p.subject)) out.insert(v->name);
        if (auto* v = std::get_if<Variable>(&p.predicate)) out.insert(v->name);
        if (auto* v = std::get_if<Variable>(&p.object)) out.insert(v->name);
    }

    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const Token& t, const std::string& what) {
        if (t.kind == Tok::end) throw QuerySyntaxError(t.line, t.column, what + " at end of input");
        throw QuerySyntaxError(t.line, t.column, what + ", found '" + t.text + "'");
    }

    void expect(Tok kind, const std::string& what) {
        if (peek().kind != kind) fail(peek(), "expected " + what);
        next();
    }

    void expect_word(std::string_view kw) {
        if (peek().kind != Tok::word || !iequals(peek().text, kw)) {
            fail(peek(), "expected " + std::string(kw));
        }
        next();
    }

    TriplePattern pattern() {
        TriplePattern p{Variable{}, Variable{}, Variable{}};
        const Token& s = next();
        if (s.kind == Tok::variable) {
            p.subject = Variable{s.text};
        } else if (s.kind == Tok::iri) {
            p.subject = Iri(s.text);
        } else {
            fail(s, "expected subject (variable or ds: IRI)");
        }

        const Token& pr = next();
        if (pr.kind == Tok::variable) {
            p.predicate = Variable{pr.text};
        } else if (pr.kind == Tok::word) {
            auto pred = predicate_from_string(pr.text);
            if (!pred) throw QuerySyntaxError(pr.line, pr.column, "unknown predicate '" + pr.text + "'");
            p.predicate = *pred;
        } else {
            fail(pr, "expected predicate");
        }

        const Token& o = next();
        if (o.kind == Tok::variable) {
            p.object = Variable{o.text};
        } else if (o.kind == Tok::iri) {
            p.object = Iri(o.text);
        } else if (o.kind == Tok::literal) {
            p.object = Literal{o.text};
        } else {
            fail(o, "expected object (variable, ds: IRI or literal)");
        }
        return p;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

std::string slot_text(const SubjectSlot& s) {
    if (auto* v = std::get_if<Variable>(&s)) return "?" + v->name;
    return std::get<Iri>(s).str();
}

std::string slot_text(const PredicateSlot& s) {
    if (auto* v = std::get_if<Variable>(&s)) return "?" + v->name;
    return std::string(to_string(std::get<Predicate>(s)));
}

std::string slot_text(const ObjectSlot& s) {
    if (auto* v = std::get_if<Variable>(&s)) return "?" + v->name;
    if (auto* i = std::get_if<Iri>(&s)) return i->str();
    return quote_literal(std::get<Literal>(s).value);
}

void join_from(const KnowledgeGraph& g, const std::vector<TriplePattern>& patterns, std::size_t at,
               const Bindings& row, std::vector<Bindings>& out) {
    if (at == patterns.size()) {
        out.push_back(row);
        return;
    }
    for (auto& m : g.query(patterns[at], row)) join_from(g, patterns, at + 1, m.bindings, out);
}

}  // namespace

SelectQuery parse_select(std::string_view text) { return Parser(Lexer(text).run()).run(); }

std::string to_string(const TriplePattern& p) {
    return slot_text(p.subject) + " " + slot_text(p.predicate) + " " + slot_text(p.object);
}

std::string to_string(const SelectQuery& q) {
    std::string out = "SELECT";
    if (q.select_all) {
        out += " *";
    } else {
        for (const auto& v : q.variables) out += " ?" + v;
    }
    out += " WHERE {";
    for (std::size_t i = 0; i < q.patterns.size(); ++i) {
        out += i == 0 ? " " : " . ";
        out += to_string(q.patterns[i]);
    }
    out += " }";
    return out;
}

std::vector<Bindings> evaluate_patterns(const KnowledgeGraph& g,
                                        const std::vector<TriplePattern>& patterns) {
    std::vector<Bindings> out;
    if (patterns.empty()) return out;
    join_from(g, patterns, 0, Bindings{}, out);
    return out;
}

std::vector<Bindings> execute(const KnowledgeGraph& g, const SelectQuery& q) {
    auto rows = evaluate_patterns(g, q.patterns);
    if (q.select_all) return rows;
    for (auto& row : rows) {
        Bindings projected;
        for (const auto& v : q.variables) {
            if (auto it = row.find(v); it != row.end()) projected.emplace(v, it->second);
        }
        row = std::move(projected);
    }
    return rows;
}

std::string format_rows(const SelectQuery& q, const std::vector<Bindings>& rows) {
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        auto emit = [&](const std::string& name, const Value& v) {
            if (!line.empty()) line.push_back(' ');
            line += "?" + name + "=" + to_canonical(v);
        };
        if (q.select_all) {
            for (const auto& [name, v] : row) emit(name, v);
        } else {
            for (const auto& name : q.variables) {
                if (auto it = row.find(name); it != row.end()) emit(name, it->second);
            }
        }
        out += line;
        out.push_back('\n');
    }
    return out;
}

}  // namespace dsrepair::kg
