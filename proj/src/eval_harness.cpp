// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace dsrepair::eval {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string required_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw std::invalid_argument(std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

TaskRecord task_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("task must be a JSON object");
    TaskRecord t;
    t.id = required_string(j, "id");
    t.library = required_string(j, "library");
    t.description = required_string(j, "description");
    t.buggy_code = required_string(j, "buggy_code");
    t.imports = optional_string(j, "imports");
    t.test_code = optional_string(j, "test_code");
    if (trim(t.id).empty()) throw std::invalid_argument("empty id");
    if (trim(t.buggy_code).empty()) throw std::invalid_argument("task '" + t.id + "' has empty buggy_code");
    return t;
}

json to_json(const TaskRecord& t) {
    return json{{"id", t.id},
                {"library", t.library},
                {"description", t.description},
                {"buggy_code", t.buggy_code},
                {"imports", t.imports},
                {"test_code", t.test_code}};
}

Corpus load_corpus_text(std::string_view text) {
    Corpus c;
    std::set<std::string> ids;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        try {
            TaskRecord t = task_from_json(json::parse(line));
            if (!ids.insert(t.id).second) throw std::invalid_argument("duplicate task id '" + t.id + "'");
            c.tasks.push_back(std::move(t));
        } catch (const std::exception& e) {
            c.errors.push_back({number, e.what()});
        }
    }
    return c;
}

Corpus load_corpus(const std::filesystem::path& path) { return load_corpus_text(read_file(path)); }

std::string_view to_string(KnowledgeSource s) noexcept { return s == KnowledgeSource::kg ? "kg" : "plain_text"; }

std::optional<KnowledgeSource> knowledge_source_from_string(std::string_view s) noexcept {
    if (s == "kg") return KnowledgeSource::kg;
    if (s == "plain_text") return KnowledgeSource::plain_text;
    return std::nullopt;
}

std::string_view to_string(OutcomeStatus s) noexcept {
    switch (s) {
        case OutcomeStatus::fixed: return "fixed";
        case OutcomeStatus::failed: return "failed";
        case OutcomeStatus::not_buggy: return "not_buggy";
        case OutcomeStatus::llm_error: return "llm_error";
    }
    return "failed";
}

namespace {

template <typename E, typename Range>
E enum_from(const json& j, const char* key, const Range& values) {
    const auto s = required_string(j, key);
    for (E v : values) {
        if (to_string(v) == s) return v;
    }
    throw std::invalid_argument(std::string("unknown ") + key + " '" + s + "'");
}

constexpr OutcomeStatus kStatuses[] = {OutcomeStatus::fixed, OutcomeStatus::failed, OutcomeStatus::not_buggy,
                                       OutcomeStatus::llm_error};
constexpr bug::BugKind kBugKinds[] = {bug::BugKind::runtime, bug::BugKind::assertion, bug::BugKind::unknown};

}  // namespace

json to_json(const RepairOutcome& o) {
    json ex = json::array();
    for (const auto& e : o.exchanges) ex.push_back(llm::to_json(e));
    return json{{"task_id", o.task_id},
                {"library", o.library},
                {"mode", prompt::to_string(o.mode)},
                {"richness", retrieval::to_string(o.richness)},
                {"repetition", o.repetition},
                {"status", to_string(o.status)},
                {"passed", o.passed},
                {"flagged_for_review", o.flagged_for_review},
                {"runner_failure", o.runner_failure},
                {"patched_code", o.patched_code},
                {"note", o.note},
                {"bug_kind", o.bug_kind ? json(bug::to_string(*o.bug_kind)) : json(nullptr)},
                {"exchanges", std::move(ex)}};
}

RepairOutcome outcome_from_json(const json& j) {
    RepairOutcome o;
    o.task_id = required_string(j, "task_id");
    o.library = optional_string(j, "library");
    o.mode = enum_from<prompt::PromptMode>(j, "mode", prompt::kAllPromptModes);
    o.richness = enum_from<retrieval::RichnessLevel>(j, "richness", retrieval::kAllRichnessLevels);
    o.repetition = j.value("repetition", std::size_t{0});
    o.status = enum_from<OutcomeStatus>(j, "status", kStatuses);
    o.passed = j.value("passed", false);
    o.flagged_for_review = j.value("flagged_for_review", false);
    o.runner_failure = j.value("runner_failure", false);
    o.patched_code = optional_string(j, "patched_code");
    o.note = optional_string(j, "note");
    if (j.contains("bug_kind") && !j.at("bug_kind").is_null()) {
        o.bug_kind = enum_from<bug::BugKind>(j, "bug_kind", kBugKinds);
    }
    for (const auto& e : j.value("exchanges", json::array())) o.exchanges.push_back(llm::exchange_from_json(e));
    return o;
}

std::optional<std::string> extract_code_block(std::string_view response) {
    struct Block {
        std::string info;
        std::string body;
    };
    std::vector<Block> blocks;
    std::size_t i = 0;
    while ((i = response.find("```", i)) != std::string_view::npos) {
        const auto info_end = response.find('\n', i + 3);
        if (info_end == std::string_view::npos) break;
        Block b;
        b.info = std::string(trim(response.substr(i + 3, info_end - i - 3)));
        auto close = response.find("```", info_end + 1);
        const bool closed = close != std::string_view::npos;
        if (!closed) close = response.size();
        auto body = response.substr(info_end + 1, close - info_end - 1);
        while (!body.empty() && (body.back() == '\n' || body.back() == '\r' || body.back() == ' ')) body.remove_suffix(1);
        b.body = std::string(body);
        blocks.push_back(std::move(b));
        if (!closed) break;
        i = close + 3;
    }
    for (const auto& b : blocks) {
        std::string info = b.info;
        std::transform(info.begin(), info.end(), info.begin(), [](unsigned char c) { return std::tolower(c); });
        if (info == "python" || info == "py" || info == "python3") return b.body;
    }
    if (!blocks.empty()) return blocks.front().body;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

std::string error_evidence(const std::string& stderr_text, const std::optional<bug::BugReport>& bug) {
    if (!trim(prompt::clean_stderr(stderr_text)).empty()) return stderr_text;
    if (bug && bug->kind == bug::BugKind::assertion) return "AssertionError";
    if (bug && bug->kind == bug::BugKind::runtime && !bug->note.empty()) return "Error: " + bug->note;
    return "Error: the code did not produce the expected result.";
}

}  // namespace

RepairOutcome repair_task(const TaskRecord& task, const RepairSettings& settings, const Resources& res,
                          runner::Runner& runner, llm::Provider& provider) {
    const auto mode = settings.mode;
    const bool wants_api = prompt::uses_api_knowledge(mode);
    if (wants_api && settings.source == KnowledgeSource::kg && res.graph == nullptr) {
        throw std::invalid_argument("mode " + std::string(prompt::to_string(mode)) + " needs a knowledge graph");
    }
    if (wants_api && settings.source == KnowledgeSource::plain_text && res.documents == nullptr) {
        throw std::invalid_argument("plain-text retrieval needs a document directory");
    }
    const prompt::TemplateSet fallback = res.templates ? prompt::TemplateSet{} : prompt::TemplateSet::embedded();
    const prompt::TemplateSet& templates = res.templates ? *res.templates : fallback;

    RepairOutcome out;
    out.task_id = task.id;
    out.library = task.library;
    out.mode = mode;
    out.richness = settings.richness;

    // 1. Tests and bug evidence for the buggy code.
    const bug::TestSpec tests = bug::extract_tests(task.description, task.test_code);
    std::optional<bug::BugReport> report;
    std::string stderr_text;
    try {
        const auto resp = runner.run(bug::make_request(runner::RunMode::localize, task.buggy_code, tests, task.imports,
                                                       settings.timeout_s));
        report = bug::to_bug_report(resp, task.buggy_code, tests);
        stderr_text = resp.stderr_text;
        if (!report) {
            out.status = OutcomeStatus::not_buggy;
            out.passed = true;
            out.note = "buggy code already passes its tests";
            return out;
        }
    } catch (const runner::RunnerError& e) {
        report = bug::runner_failure_report(e.what());
        stderr_text = report->stderr_raw;
        out.runner_failure = true;
    }
    out.bug_kind = report->kind;

    // 2. Prompt inputs.
    prompt::PromptInputs in;
    in.description = task.description;
    in.buggy_code = task.buggy_code;
    in.stderr_raw = (mode == prompt::PromptMode::chat_repair || mode == prompt::PromptMode::self_repair)
                        ? error_evidence(stderr_text, report)
                        : stderr_text;
    in.tests = tests;
    if (prompt::uses_bug_knowledge(mode)) in.bug = report;
    if (wants_api) {
        const auto extraction = retrieval::extract_invocations(task.buggy_code, task.imports);
        const std::string failing = report->failed_statement.empty() ? report->first_failed_source : report->failed_statement;
        const auto invocations = retrieval::select_invocations(extraction, failing, settings.scope);
        in.api = settings.source == KnowledgeSource::kg
                     ? retrieval::retrieve_all(*res.graph, invocations, settings.richness)
                     : retrieval::retrieve_plain_text_all(*res.documents, invocations);
    }

    // 3. Ask the model.
    std::string response;
    try {
        if (prompt::is_two_stage(mode)) {
            const auto first = prompt::build_explanation_request(in, mode, templates);
            out.exchanges.push_back(provider.complete(first.rendered));
            in.explanation = out.exchanges.back().response;
        }
        const auto repair = prompt::build(in, mode, settings.richness, templates);
        out.exchanges.push_back(provider.complete(repair.rendered));
        response = out.exchanges.back().response;
    } catch (const llm::LlmError& e) {
        out.status = OutcomeStatus::llm_error;
        out.note = e.what();
        return out;
    } catch (const prompt::PromptError& e) {
        out.status = OutcomeStatus::failed;
        out.note = std::string("prompt construction failed: ") + e.what();
        return out;
    }

    // 4. Validate the patch.
    const auto patch = extract_code_block(response);
    if (!patch || trim(*patch).empty()) {
        out.status = OutcomeStatus::failed;
        out.note = "no fenced code block in the response";
        return out;
    }
    out.patched_code = *patch;
    try {
        const auto resp = runner.run(
            bug::make_request(runner::RunMode::run_tests, out.patched_code, tests, task.imports, settings.timeout_s));
        out.passed = resp.status == runner::RunStatus::ok && resp.passed;
        if (!out.passed && resp.status != runner::RunStatus::ok) out.note = "patch run ended with status " + std::string(runner::to_string(resp.status));
    } catch (const runner::RunnerError& e) {
        out.passed = false;
        out.runner_failure = true;
        out.note = std::string("runner failure while validating the patch: ") + e.what();
    }
    out.status = out.passed ? OutcomeStatus::fixed : OutcomeStatus::failed;
    out.flagged_for_review = out.passed && trim(task.test_code).empty();
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

RunMetrics compute_metrics(std::span<const RepairOutcome> outcomes, std::optional<llm::CostModel> prices) {
    RunMetrics m;
    std::vector<llm::Usage> usages;
    std::uint64_t tokens = 0;
    for (const auto& o : outcomes) {
        for (const auto& e : o.exchanges) {
            if (e.usage) {
                usages.push_back(*e.usage);
                tokens += e.usage->input_tokens + e.usage->output_tokens;
            } else {
                ++m.usage_unknown;
            }
        }
        if (o.status == OutcomeStatus::not_buggy) continue;
        ++m.n_tasks;
        auto& lib = m.per_library[o.library];
        ++lib.n_tasks;
        if (o.passed) {
            ++m.anf;
            ++lib.anf;
        }
        if (o.flagged_for_review) ++m.flagged;
    }
    m.fr = m.n_tasks ? static_cast<double>(m.anf) / static_cast<double>(m.n_tasks) : 0.0;
    m.tu = m.n_tasks ? static_cast<double>(tokens) / static_cast<double>(m.n_tasks) : 0.0;
    if (prices) m.ms = llm::cost(usages, *prices);
    return m;
}

std::string format_rate(std::size_t anf, std::size_t n_tasks) {
    if (n_tasks == 0) return "0.00%";
    // Hundredths of a percent, half-up, in integers.
    const std::uint64_t n = n_tasks;
    const std::uint64_t hundredths = (static_cast<std::uint64_t>(anf) * 20000 + n) / (2 * n);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%llu.%02llu%%", static_cast<unsigned long long>(hundredths / 100),
                  static_cast<unsigned long long>(hundredths % 100));
    return buf;
}

json to_json(const RunMetrics& m) {
    json libs = json::object();
    for (const auto& [name, l] : m.per_library) {
        libs[name] = json{{"anf", l.anf}, {"n_tasks", l.n_tasks}, {"fr", l.fr()}, {"fr_display", format_rate(l.anf, l.n_tasks)}};
    }
    return json{{"anf", m.anf},
                {"n_tasks", m.n_tasks},
                {"fr", m.fr},
                {"fr_display", format_rate(m.anf, m.n_tasks)},
                {"tu", m.tu},
                {"ms", m.ms ? json(*m.ms) : json(nullptr)},
                {"usage_unknown", m.usage_unknown},
                {"flagged_for_review", m.flagged},
                {"per_library", std::move(libs)}};
}

std::size_t median_repetition(std::span<const std::size_t> anfs) {
    if (anfs.empty()) throw std::invalid_argument("no repetitions");
    std::vector<std::size_t> order(anfs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return anfs[a] < anfs[b]; });
    return order[(order.size() - 1) / 2];
}

Aggregate summarize(std::vector<RunMetrics> repetitions) {
    Aggregate a;
    a.repetitions = std::move(repetitions);
    std::vector<std::size_t> anfs;
    for (const auto& r : a.repetitions) anfs.push_back(r.anf);
    a.median_index = median_repetition(anfs);
    const double n = static_cast<double>(anfs.size());
    double sum = 0.0;
    for (auto v : anfs) sum += static_cast<double>(v);
    a.mean_anf = sum / n;
    double sq = 0.0;
    for (auto v : anfs) sq += (static_cast<double>(v) - a.mean_anf) * (static_cast<double>(v) - a.mean_anf);
    a.std_anf = std::sqrt(sq / n);
    return a;
}

std::string format_mean_std(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.2f", mean, std);
    return buf;
}

// ---------------------------------------------------------------------------
// Ledger

void LedgerWriter::append(const RepairOutcome& o) {
    const std::string line = to_json(o).dump();
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
}

std::vector<RepairOutcome> read_ledger_text(std::string_view text) {
    std::vector<RepairOutcome> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        try {
            out.push_back(outcome_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument("ledger line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

std::vector<RepairOutcome> read_ledger(const std::filesystem::path& path) { return read_ledger_text(read_file(path)); }

std::map<RunKey, RunMetrics> recompute(std::span<const RepairOutcome> ledger, std::optional<llm::CostModel> prices) {
    std::map<RunKey, std::vector<RepairOutcome>> groups;
    for (const auto& o : ledger) groups[RunKey{o.mode, o.richness, o.repetition}].push_back(o);
    std::map<RunKey, RunMetrics> out;
    for (const auto& [key, outcomes] : groups) out.emplace(key, compute_metrics(outcomes, prices));
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(std::span<const TaskRecord> tasks, const EvalOptions& options, const Resources& res,
                    const RunnerFactory& make_runner, llm::Provider& provider, LedgerWriter* ledger) {
    if (options.repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, std::max<std::size_t>(1, tasks.size())));

    EvalResult result;
    std::vector<RunMetrics> metrics;
    for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
        std::vector<RepairOutcome> slots(tasks.size());
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mu;

        auto work = [&] {
            try {
                auto runner = make_runner();
                for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
                    slots[i] = repair_task(tasks[i], options.settings, res, *runner, provider);
                    slots[i].repetition = rep;
                }
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = tasks.size();
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }
        if (failure) std::rethrow_exception(failure);

        if (ledger) {
            for (const auto& o : slots) ledger->append(o);
        }
        metrics.push_back(compute_metrics(slots, options.prices));
        result.outcomes.push_back(std::move(slots));
    }
    result.aggregate = summarize(std::move(metrics));
    return result;
}

// ---------------------------------------------------------------------------
// Overlap

std::size_t OverlapReport::intersection(std::span<const std::string> subset) const {
    std::size_t n = 0;
    for (const auto& row : rows) {
        const bool covers = std::all_of(subset.begin(), subset.end(), [&](const std::string& m) {
            return std::find(row.modes.begin(), row.modes.end(), m) != row.modes.end();
        });
        if (covers) n += row.count;
    }
    return n;
}

OverlapReport overlap(const std::vector<std::pair<std::string, std::vector<RepairOutcome>>>& by_mode) {
    if (by_mode.size() > 63) throw std::invalid_argument("too many modes for overlap analysis");
    OverlapReport report;
    std::optional<std::set<std::string>> corpus;
    std::map<std::string, std::uint64_t> masks;  // task id -> modes that fixed it
    for (std::size_t m = 0; m < by_mode.size(); ++m) {
        const auto& [name, outcomes] = by_mode[m];
        report.modes.push_back(name);
        std::set<std::string> ids;
        for (const auto& o : outcomes) {
            if (!ids.insert(o.task_id).second) throw std::invalid_argument("mode " + name + " lists task " + o.task_id + " twice");
            if (o.passed && o.status == OutcomeStatus::fixed) masks[o.task_id] |= std::uint64_t{1} << m;
        }
        if (corpus && *corpus != ids) throw std::invalid_argument("mode " + name + " was evaluated on a different corpus");
        corpus = std::move(ids);
    }

    std::map<std::uint64_t, std::vector<std::string>> groups;
    for (const auto& [id, mask] : masks) groups[mask].push_back(id);
    for (auto& [mask, ids] : groups) {
        OverlapRow row;
        for (std::size_t m = 0; m < by_mode.size(); ++m) {
            if (mask & (std::uint64_t{1} << m)) row.modes.push_back(by_mode[m].first);
        }
        row.count = ids.size();
        row.task_ids = std::move(ids);
        report.rows.push_back(std::move(row));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const OverlapRow& a, const OverlapRow& b) { return a.count > b.count; });
    return report;
}

json to_json(const OverlapReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) rows.push_back(json{{"modes", row.modes}, {"count", row.count}, {"task_ids", row.task_ids}});
    return json{{"modes", r.modes}, {"rows", std::move(rows)}};
}

}  // namespace dsrepair::eval
