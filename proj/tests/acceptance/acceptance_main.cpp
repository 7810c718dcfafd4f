// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// limits are pinned below; the exit status is non-zero if any line fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsrepair/api_retrieval.hpp"
#include "dsrepair/doc_ingest.hpp"
#include "dsrepair/eval_harness.hpp"
#include "dsrepair/kg_store.hpp"
#include "dsrepair/llm_client.hpp"
#include "dsrepair/prompt_builder.hpp"
#include "dsrepair/sparql.hpp"
#include "e2e_fixture.hpp"
#include "prompt_fixture.hpp"
#include "synthetic_corpus.hpp"
#include "test_support.hpp"

using namespace dsrepair;
namespace dt = dsrepair::testing;
using nlohmann::json;

namespace {

constexpr double kRoundTripLimitS = 5.0;
constexpr double kQueryOracleLimitS = 30.0;
constexpr double kE2ELimitS = 60.0;
constexpr double kCostTolerance = 1e-12;
constexpr std::size_t kRoundTripRecords = 100;
constexpr std::size_t kQueryCases = 200;
constexpr std::size_t kMaxStoreTriples = 10'000;
constexpr std::size_t kExtraExtractionCases = 30;
constexpr std::size_t kCostLists = 100;

/// Collects the first few failures of one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (ok) return;
        if (failures_.size() < 5) failures_.push_back(what);
        ++failed_;
    }
    void note(std::string s) { notes_.push_back(std::move(s)); }
    bool ok() const { return failed_ == 0; }
    std::string summary() const {
        std::ostringstream os;
        os << checks_ << " checks";
        for (const auto& n : notes_) os << ", " << n;
        if (failed_) {
            os << "; " << failed_ << " failed:";
            for (const auto& f : failures_) os << " [" << f << "]";
        }
        return os.str();
    }

private:
    std::size_t checks_ = 0;
    std::size_t failed_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string show(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------

void kg_round_trip(Check& c) {
    const auto records = dt::synthetic_records(kRoundTripRecords, 2026);
    auto res = ingest::ingest_corpus_text(dt::to_jsonl(records));
    c.expect(res.errors.empty(), "synthetic corpus ingests without errors");
    c.expect(res.records == kRoundTripRecords, "all records ingested");

    const auto first = kg::save_dump(res.graph);
    const auto loaded = kg::load_dump(first);
    const auto second = kg::save_dump(loaded);
    c.expect(first == second, "re-save is byte-identical");
    c.expect(loaded == res.graph, "loaded graph equals the ingested graph");

    auto literal = [&](const std::string& query) -> std::optional<std::string> {
        auto rows = kg::execute(loaded, kg::parse_select(query));
        if (rows.size() != 1) return std::nullopt;
        const auto* lit = std::get_if<kg::Literal>(&rows[0].begin()->second);
        return lit ? std::optional<std::string>(lit->value) : std::nullopt;
    };
    std::size_t params = 0;
    for (const auto& r : records) {
        const std::string s = "ds:" + r.qualified_name;
        c.expect(literal("SELECT ?e WHERE { " + s + " has_expression ?e }") == r.expression,
                 r.qualified_name + " expression");
        c.expect(literal("SELECT ?e WHERE { " + s + " has_explanation ?e }") == r.explanation,
                 r.qualified_name + " explanation");
        for (const auto& p : r.parameters) {
            const auto iri = ingest::parameter_iri(r.qualified_name, p.name).str();
            c.expect(literal("SELECT ?t WHERE { " + s + " hasParameter " + iri + " . " + iri + " hasType ?t }") ==
                         p.dtype,
                     r.qualified_name + " parameter " + p.name + " dtype");
            ++params;
        }
    }
    c.note(std::to_string(first.size()) + " dump bytes");
    c.note(std::to_string(params) + " parameters");
}

// ---------------------------------------------------------------------------

kg::KnowledgeGraph build_graph(const std::vector<dt::StrTriple>& store) {
    kg::KnowledgeGraph g;
    for (const auto& t : store) {
        kg::Term obj = t.o.starts_with("ds:") ? kg::Term(kg::Iri(t.o)) : kg::Term(kg::Literal{dt::unquote(t.o)});
        g.insert(kg::Triple{kg::Iri(t.s), *kg::predicate_from_string(t.p), obj});
    }
    return g;
}

std::vector<std::string> engine_keys(const std::vector<kg::Bindings>& rows) {
    std::vector<dt::StrRow> out;
    out.reserve(rows.size());
    for (const auto& b : rows) {
        dt::StrRow r;
        for (const auto& [k, v] : b) r[k] = kg::to_canonical(v);
        out.push_back(std::move(r));
    }
    return dt::row_keys(out);
}

void query_oracle(Check& c) {
    std::mt19937_64 rng(424242);
    const std::vector<std::size_t> sizes = {100, 400, 1500, 4000, kMaxStoreTriples};
    struct Store {
        dt::RandomStore st;
        kg::KnowledgeGraph g;
    };
    std::vector<Store> stores;
    for (auto n : sizes) {
        auto st = dt::random_store(rng, n);
        auto g = build_graph(st.triples);
        stores.push_back(Store{std::move(st), std::move(g)});
    }

    auto pick = [&](const std::vector<std::string>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };
    std::vector<std::string> all_preds = dt::literal_predicates();
    for (const auto& p : dt::dependency_predicates()) all_preds.push_back(p);

    std::size_t joins = 0;
    std::size_t largest = 0;
    std::size_t non_empty = 0;
    for (std::size_t i = 0; i < kQueryCases; ++i) {
        const auto& [st, g] = stores[i % stores.size()];
        largest = std::max(largest, st.triples.size());
        std::vector<dt::StrPattern> pats;
        switch ((i / stores.size()) % 6) {
            case 0: {  // one pattern, each slot bound or free at random
                dt::StrPattern p{"?s", "?p", "?o"};
                if (rng() % 3 == 0) p.s = pick(st.subjects);
                if (rng() % 2 == 0) p.p = pick(all_preds);
                if (rng() % 3 == 0) p.o = rng() % 2 ? pick(st.literals) : pick(st.subjects);
                pats = {p};
                break;
            }
            case 1:
                pats = {{"?f", "hasParameter", "?p"}, {"?p", pick(dt::literal_predicates()), "?t"}};
                break;
            case 2:
                pats = {{pick(st.subjects), "?p", "?o"}, {"?o", "?q", "?z"}};
                break;
            case 3:
                pats = {{"?s", pick(dt::literal_predicates()), pick(st.literals)}, {"?s", "?p", "?o"}};
                break;
            case 4:
                pats = {{"?a", pick(dt::dependency_predicates()), "?m"}, {"?b", "belongsToModule", "?m"}};
                break;
            default:
                pats = {{"?x", "?p", pick(st.subjects)}, {"?x", pick(all_preds), "?y"}};
                break;
        }
        std::string text = "SELECT * WHERE {";
        for (const auto& p : pats) text += " " + p.s + " " + p.p + " " + p.o + " .";
        text += " }";
        const auto expected = dt::row_keys(dt::brute_force(st.triples, pats));
        const auto got = engine_keys(kg::execute(g, kg::parse_select(text)));
        c.expect(got == expected, "case " + std::to_string(i) + ": " + text);
        joins += pats.size() == 2;
        non_empty += !expected.empty();
    }
    c.note(std::to_string(joins) + " joins");
    c.note(std::to_string(non_empty) + " non-empty");
    c.note("largest store " + std::to_string(largest));
    c.expect(largest <= kMaxStoreTriples && largest >= kMaxStoreTriples / 2, "store sizes reach the limit");
}

// ---------------------------------------------------------------------------

std::vector<std::string> names_of(const std::vector<retrieval::ApiInvocation>& invs, bool resolved_only) {
    std::vector<std::string> out;
    for (const auto& i : invs) {
        if (!resolved_only || i.resolved) out.push_back(i.qualified_name);
    }
    return out;
}

void extraction(Check& c) {
    const auto cases = json::parse(dt::read_file(dt::fixture("extraction/cases.json")));
    std::size_t extra = 0;
    bool saw_flip_split = false;
    bool saw_minorticks = false;
    for (const auto& k : cases) {
        const std::string name = k.at("name");
        const auto ex = retrieval::extract_invocations(k.at("code").get<std::string>());
        const auto names = names_of(ex.invocations, false);
        c.expect(names == k.at("expected").get<std::vector<std::string>>(), name + " names");
        c.expect(names_of(ex.invocations, true) == k.at("resolved").get<std::vector<std::string>>(), name + " resolved");
        if (name == "flip_split_chain") {
            saw_flip_split = true;
            const std::set<std::string> got(names.begin(), names.end());
            c.expect(got == std::set<std::string>{"numpy.flipud", "numpy.array_split"}, "flip and split set");
        } else if (name == "scatter_minorticks") {
            saw_minorticks = true;
            c.expect(std::count(names.begin(), names.end(), "matplotlib.pyplot.minorticks_on") == 1,
                     "minorticks_on resolved");
        } else {
            ++extra;
        }
    }
    c.expect(saw_flip_split && saw_minorticks, "both reference snippets present");
    c.expect(extra >= kExtraExtractionCases, "at least 30 additional snippets");
    c.note(std::to_string(extra) + " additional snippets");
}

// ---------------------------------------------------------------------------

void cost_formula(Check& c) {
    const auto prices = llm::known_prices("gpt-3.5-turbo");
    c.expect(prices.has_value(), "gpt-3.5-turbo prices known");
    if (!prices) return;
    const std::vector<llm::Usage> one = {{1000, 500}};
    const double v = llm::cost(one, *prices);
    c.expect(std::abs(v - 0.00125) <= kCostTolerance, "cost = " + show(v));

    // Oracle: long-double sum of per-request terms at the same list prices.
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::uint64_t> tokens(0, 50'000);
    for (std::size_t round = 0; round < kCostLists; ++round) {
        std::vector<llm::Usage> us(std::uniform_int_distribution<std::size_t>(0, 60)(rng));
        for (auto& u : us) u = {tokens(rng), tokens(rng)};
        long double oracle = 0;
        for (const auto& u : us) oracle += u.input_tokens * 0.50L / 1e6L + u.output_tokens * 1.50L / 1e6L;
        const double total = llm::cost(us, *prices);
        c.expect(std::abs(total - static_cast<double>(oracle)) <= kCostTolerance, "oracle list " + std::to_string(round));

        const auto cut = us.empty() ? 0 : rng() % (us.size() + 1);
        std::vector<llm::Usage> a(us.begin(), us.begin() + static_cast<std::ptrdiff_t>(cut));
        std::vector<llm::Usage> b(us.begin() + static_cast<std::ptrdiff_t>(cut), us.end());
        c.expect(std::abs(llm::cost(a, *prices) + llm::cost(b, *prices) - total) <= kCostTolerance,
                 "additivity list " + std::to_string(round));

        auto doubled = us;
        doubled.insert(doubled.end(), us.begin(), us.end());
        c.expect(std::abs(llm::cost(doubled, *prices) - 2 * total) <= kCostTolerance,
                 "homogeneity list " + std::to_string(round));
    }
}

// ---------------------------------------------------------------------------

void metrics_arithmetic(Check& c) {
    const auto fr = eval::format_rate(104, 562);
    c.expect(fr == "18.51%", "fr(104, 562) = " + fr);

    std::vector<eval::RunMetrics> reps;
    for (std::size_t a : {6, 8, 7}) {
        eval::RunMetrics m;
        m.anf = a;
        reps.push_back(m);
    }
    const auto agg = eval::summarize(reps);
    const auto shown = eval::format_mean_std(agg.mean_anf, agg.std_anf);
    c.expect(shown == "7.00 \xC2\xB1 0.82", "mean/std = " + shown);
    c.expect(agg.mean_anf == 7.0, "mean is 7");
    c.expect(std::abs(agg.std_anf - std::sqrt(2.0 / 3.0)) <= 1e-12, "population std is sqrt(2/3)");

    // Ledger written by a real evaluation recomputes to the same metrics.
    auto e = dt::load_e2e();
    const auto prices = llm::known_prices("gpt-4o-mini");
    std::ostringstream text;
    eval::LedgerWriter ledger(text);
    std::map<eval::RunKey, eval::RunMetrics> direct;
    for (auto mode : {prompt::PromptMode::dsrepair, prompt::PromptMode::self_repair}) {
        eval::EvalOptions opts;
        opts.settings.mode = mode;
        opts.repetitions = 3;
        opts.workers = 2;
        opts.prices = prices;
        auto res = eval::evaluate(e.tasks, opts, e.resources(), e.runners(), e.provider, &ledger);
        for (std::size_t r = 0; r < res.aggregate.repetitions.size(); ++r) {
            direct[eval::RunKey{mode, opts.settings.richness, r}] = res.aggregate.repetitions[r];
        }
    }
    const auto recomputed = eval::recompute(eval::read_ledger_text(text.str()), prices);
    c.expect(recomputed.size() == direct.size(), "one recomputed run per repetition");
    for (const auto& [key, m] : direct) {
        auto it = recomputed.find(key);
        c.expect(it != recomputed.end() && it->second == m,
                 std::string(prompt::to_string(key.mode)) + " repetition " + std::to_string(key.repetition));
    }
}

// ---------------------------------------------------------------------------

bool has_warning_line(const std::string& text) {
    static const std::regex warning(R"(^\s*(\S+:\d+:\s*)?[A-Za-z_.]*Warning\b)");
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (std::regex_search(line, warning)) return true;
    }
    return false;
}

bool has_absolute_path(const std::string& text) {
    static const std::regex posix(R"((^|[\s"'(=])/[A-Za-z0-9_.~-]+/)");
    static const std::regex drive(R"((^|[\s"'(=])[A-Za-z]:[\\/])");
    return std::regex_search(text, posix) || std::regex_search(text, drive);
}

void prompt_golden(Check& c) {
    using prompt::PromptMode;
    namespace h = prompt::header;
    const auto f = dt::load_prompt_fixture("minorticks_inputs");
    const auto full = prompt::build(f.inputs, PromptMode::dsrepair, f.richness);
    c.expect(full.rendered == dt::read_file(dt::fixture("prompt/minorticks_dsrepair.golden")), "dsrepair golden");

    const auto sections = prompt::parse_sections(full.rendered);
    auto without = [&](std::initializer_list<std::string_view> drop) {
        auto s = sections;
        for (auto d : drop) std::erase_if(s, [&](const prompt::Section& x) { return x.header == d; });
        return s;
    };
    const std::vector<std::pair<PromptMode, std::vector<prompt::Section>>> ablations = {
        {PromptMode::dsrepair_wo_api, without({h::api})},
        {PromptMode::dsrepair_wo_bug, without({h::bug})},
        {PromptMode::dsrepair_wo_api_bug, without({h::api, h::bug})},
    };
    for (const auto& [mode, want] : ablations) {
        const auto got = prompt::parse_sections(prompt::build(f.inputs, mode, f.richness).rendered);
        c.expect(got == want, std::string(prompt::to_string(mode)) + " differs only in its dropped sections");
        c.expect(got.size() < sections.size(), std::string(prompt::to_string(mode)) + " drops something");
    }

    std::size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dt::fixture("stderr"))) {
        const auto name = entry.path().filename().string();
        const auto cleaned = prompt::clean_stderr(dt::read_file(entry.path()));
        c.expect(!has_absolute_path(cleaned), name + " has no absolute path");
        c.expect(!has_warning_line(cleaned), name + " has no warning line");
        ++n;
    }
    c.expect(n >= 6, "stderr fixtures present");
    c.note(std::to_string(n) + " stderr fixtures");
}

// ---------------------------------------------------------------------------

void end_to_end(Check& c) {
    auto e = dt::load_e2e();
    c.expect(e.tasks.size() == e.expected.at("n_tasks").get<std::size_t>(), "task count");
    std::map<std::string, std::vector<eval::RepairOutcome>> outcomes;
    for (const auto& [name, anf] : e.expected.at("anf").items()) {
        eval::EvalOptions opts;
        opts.settings.mode = *prompt::mode_from_string(name);
        opts.prices = llm::known_prices("gpt-3.5-turbo");
        auto res = eval::evaluate(e.tasks, opts, e.resources(), e.runners(), e.provider);
        const auto& m = res.aggregate.median();
        c.expect(m.anf == anf.get<std::size_t>(), name + " ANF " + std::to_string(m.anf));
        c.expect(m.n_tasks == e.tasks.size(), name + " buggy task count");
        std::size_t anf_sum = 0;
        std::size_t task_sum = 0;
        for (const auto& [lib, l] : m.per_library) {
            c.expect(l.anf == e.expected.at("per_library_anf").at(name).at(lib).get<std::size_t>(),
                     name + " " + lib + " ANF");
            c.expect(l.n_tasks == e.expected.at("libraries").at(lib).get<std::size_t>(), name + " " + lib + " tasks");
            anf_sum += l.anf;
            task_sum += l.n_tasks;
        }
        c.expect(anf_sum == m.anf && task_sum == m.n_tasks, name + " per-library sums reconcile");
        outcomes[name] = res.outcomes[0];
    }

    const auto modes = e.expected.at("overlap_modes").get<std::vector<std::string>>();
    c.expect(modes.size() == 3, "three overlap modes");
    std::vector<std::pair<std::string, std::vector<eval::RepairOutcome>>> by_mode;
    std::map<std::string, std::set<std::string>> fixed;
    for (const auto& m : modes) {
        by_mode.emplace_back(m, outcomes.at(m));
        fixed[m] = dt::fixed_ids(outcomes.at(m));
    }
    const auto report = eval::overlap(by_mode);
    for (const auto& row : dt::power_set_overlap(modes, fixed, e.task_ids())) {
        std::size_t exact = 0;
        for (const auto& r : report.rows) {
            if (r.modes == row.modes) exact = r.count;
        }
        std::string label;
        for (const auto& m : row.modes) label += (label.empty() ? "" : "+") + m;
        c.expect(exact == row.exact, label + " exact count");
        c.expect(report.intersection(row.modes) == row.intersection, label + " intersection");
    }
    c.expect(report.rows.size() == e.expected.at("overlap_rows").size(), "hand-counted overlap rows");
    c.note(std::to_string(e.expected.at("anf").size()) + " modes");
}

// ---------------------------------------------------------------------------

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

void richness(Check& c) {
    const auto& g = dt::sample_graph();
    const auto cases = json::parse(dt::read_file(dt::fixture("extraction/cases.json")));
    for (const auto& k : cases) {
        const std::string name = k.at("name");
        const auto ex = retrieval::extract_invocations(k.at("code").get<std::string>());
        const auto base =
            retrieval::retrieve_all(g, ex.invocations, retrieval::RichnessLevel::expression_only).render().size();
        for (auto level : retrieval::kAllRichnessLevels) {
            c.expect(retrieval::retrieve_all(g, ex.invocations, level).render().size() >= base,
                     name + " at " + std::string(retrieval::to_string(level)));
        }
    }

    // Random documents: a window is exactly 50 tokens whenever the document has
    // at least that many, and the keyword is always inside it.
    std::mt19937_64 rng(50);
    std::size_t unclipped = 0;
    for (int round = 0; round < 300; ++round) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
        const std::size_t at = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        std::string doc;
        for (std::size_t i = 0; i < n; ++i) doc += (i == at ? "numpy.flipud" : "w" + std::to_string(i)) + " ";
        const auto w = retrieval::retrieve_plain_text(std::vector<std::string>{doc}, "numpy.flipud");
        const auto toks = w.size() == 1 ? split_ws(w[0]) : std::vector<std::string>{};
        if (n >= 50) {
            ++unclipped;
            c.expect(toks.size() == 50, "window of " + std::to_string(toks.size()) + " tokens");
        } else {
            c.expect(toks.size() == n, "short document returned whole");
        }
        c.expect(std::count(toks.begin(), toks.end(), "numpy.flipud") == 1, "keyword in window");
    }
    c.expect(retrieval::kPlainTextWindow == 50, "window constant is 50");

    const auto docs = retrieval::load_text_corpus(dt::data_dir() / "plain_docs");
    std::vector<retrieval::ApiInvocation> invs;
    for (const auto& k : cases) {
        for (const auto& i : retrieval::extract_invocations(k.at("code").get<std::string>()).invocations) {
            if (i.resolved) invs.push_back(i);
        }
    }
    const auto text = retrieval::retrieve_plain_text_all(docs, invs);
    std::size_t windows = 0;
    for (const auto& b : text.blocks) {
        for (const auto& s : b.sentences) {
            c.expect(split_ws(s).size() == 50, "shipped doc window");
            ++windows;
        }
    }
    c.note(std::to_string(unclipped) + " unclipped random windows");
    c.note(std::to_string(windows) + " shipped-doc windows");
}

struct Criterion {
    const char* name;
    double limit_s;  // 0 means no time limit
    std::function<void(Check&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"kg_round_trip", kRoundTripLimitS, kg_round_trip},
        {"query_oracle", kQueryOracleLimitS, query_oracle},
        {"extraction", 0, extraction},
        {"cost_formula", 0, cost_formula},
        {"metrics_arithmetic", 0, metrics_arithmetic},
        {"prompt_golden", 0, prompt_golden},
        {"end_to_end", kE2ELimitS, end_to_end},
        {"richness", 0, richness},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& cr = criteria[i];
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (cr.limit_s > 0) c.expect(s < cr.limit_s, "runtime over " + show(cr.limit_s) + " s");
        std::ostringstream time;
        time.precision(3);
        time << std::fixed << s << " s";
        if (cr.limit_s > 0) time << " < " << cr.limit_s << " s";
        const bool ok = c.ok();
        failed += !ok;
        std::cout << (ok ? "PASS" : "FAIL") << " [" << i + 1 << "] " << cr.name << ": " << c.summary() << " ("
                  << time.str() << ")" << std::endl;
    }
    std::cout << (failed ? "FAIL" : "PASS") << ": " << criteria.size() - static_cast<std::size_t>(failed) << "/"
              << criteria.size() << " acceptance criteria" << std::endl;
    return failed ? 1 : 0;
}
