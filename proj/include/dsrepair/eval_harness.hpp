// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Repair loop over a task corpus, outcome ledger, and the aggregate metrics
// computed from it.

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dsrepair/api_retrieval.hpp"
#include "dsrepair/bug_enrichment.hpp"
#include "dsrepair/kg_store.hpp"
#include "dsrepair/llm_client.hpp"
#include "dsrepair/prompt_builder.hpp"
#include "dsrepair/runner.hpp"

namespace dsrepair::eval {

struct TaskRecord {
    std::string id;
    std::string library;
    std::string description;
    std::string buggy_code;
    std::string imports;
    std::string test_code;

    friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

TaskRecord task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskRecord& t);

struct CorpusError {
    std::size_t line = 0;
    std::string message;
};

struct Corpus {
    std::vector<TaskRecord> tasks;
    std::vector<CorpusError> errors;
};

/// Bad lines and duplicate ids are reported and skipped.
Corpus load_corpus_text(std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);

enum class KnowledgeSource { kg, plain_text };
std::string_view to_string(KnowledgeSource s) noexcept;
std::optional<KnowledgeSource> knowledge_source_from_string(std::string_view s) noexcept;

struct RepairSettings {
    prompt::PromptMode mode = prompt::PromptMode::dsrepair;
    retrieval::RichnessLevel richness = retrieval::RichnessLevel::plus_both;
    retrieval::RetrievalScope scope = retrieval::RetrievalScope::failing_first;
    KnowledgeSource source = KnowledgeSource::kg;
    double timeout_s = 10.0;
};

/// Borrowed inputs shared by every task. `graph` is required when the mode
/// uses API knowledge from the graph, `documents` for plain-text retrieval.
struct Resources {
    const kg::KnowledgeGraph* graph = nullptr;
    const std::vector<std::string>* documents = nullptr;
    const prompt::TemplateSet* templates = nullptr;  // embedded defaults when null
};

enum class OutcomeStatus { fixed, failed, not_buggy, llm_error };
std::string_view to_string(OutcomeStatus s) noexcept;

struct RepairOutcome {
    std::string task_id;
    std::string library;
    prompt::PromptMode mode = prompt::PromptMode::dsrepair;
    retrieval::RichnessLevel richness = retrieval::RichnessLevel::plus_both;
    std::size_t repetition = 0;
    OutcomeStatus status = OutcomeStatus::failed;
    bool passed = false;
    bool flagged_for_review = false;
    bool runner_failure = false;  // a runner call threw
    std::string patched_code;
    std::string note;
    std::optional<bug::BugKind> bug_kind;
    std::vector<llm::ChatExchange> exchanges;
};

nlohmann::json to_json(const RepairOutcome& o);
RepairOutcome outcome_from_json(const nlohmann::json& j);

/// Body of the first ```python (or ```py) block, else of the first fenced block.
std::optional<std::string> extract_code_block(std::string_view response);

/// Single-shot repair of one task. Throws std::invalid_argument when the
/// resources needed by `settings` are missing.
RepairOutcome repair_task(const TaskRecord& task, const RepairSettings& settings, const Resources& res,
                          runner::Runner& runner, llm::Provider& provider);

// ---------------------------------------------------------------------------
// Metrics

struct LibraryMetrics {
    std::size_t anf = 0;
    std::size_t n_tasks = 0;
    double fr() const noexcept { return n_tasks ? static_cast<double>(anf) / static_cast<double>(n_tasks) : 0.0; }

    friend bool operator==(const LibraryMetrics&, const LibraryMetrics&) = default;
};

struct RunMetrics {
    std::size_t anf = 0;
    std::size_t n_tasks = 0;  // buggy tasks: not_buggy outcomes excluded
    double fr = 0.0;
    double tu = 0.0;                // mean input+output tokens per task, usage-known exchanges only
    std::optional<double> ms;       // USD; nullopt without a cost model
    std::size_t usage_unknown = 0;  // exchanges left out of tu/ms
    std::size_t flagged = 0;
    std::map<std::string, LibraryMetrics> per_library;

    friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

RunMetrics compute_metrics(std::span<const RepairOutcome> outcomes, std::optional<llm::CostModel> prices);

/// Fix rate as a percentage with two decimals, rounded half-up: "18.51%".
std::string format_rate(std::size_t anf, std::size_t n_tasks);

nlohmann::json to_json(const RunMetrics& m);

struct Aggregate {
    std::vector<RunMetrics> repetitions;
    std::size_t median_index = 0;  // repetition whose ANF is the (lower) median
    double mean_anf = 0.0;
    double std_anf = 0.0;  // population

    const RunMetrics& median() const { return repetitions.at(median_index); }
};

/// Index of the lower-middle ANF after a stable sort; ties keep repetition order.
std::size_t median_repetition(std::span<const std::size_t> anfs);
Aggregate summarize(std::vector<RunMetrics> repetitions);
/// "7.00 ± 0.82"
std::string format_mean_std(double mean, double std);

// ---------------------------------------------------------------------------
// Ledger

class LedgerWriter {
public:
    explicit LedgerWriter(std::ostream& out) : out_(out) {}
    void append(const RepairOutcome& o);

private:
    std::ostream& out_;
    std::mutex mu_;
};

std::vector<RepairOutcome> read_ledger_text(std::string_view text);
std::vector<RepairOutcome> read_ledger(const std::filesystem::path& path);

struct RunKey {
    prompt::PromptMode mode;
    retrieval::RichnessLevel richness;
    std::size_t repetition;
    friend auto operator<=>(const RunKey&, const RunKey&) = default;
};

/// Metrics per (mode, richness, repetition) recomputed from ledger outcomes.
std::map<RunKey, RunMetrics> recompute(std::span<const RepairOutcome> ledger, std::optional<llm::CostModel> prices);

// ---------------------------------------------------------------------------
// Evaluation

using RunnerFactory = std::function<std::unique_ptr<runner::Runner>()>;

struct EvalOptions {
    RepairSettings settings;
    std::size_t repetitions = 1;
    std::size_t workers = 1;
    std::optional<llm::CostModel> prices;
};

struct EvalResult {
    std::vector<std::vector<RepairOutcome>> outcomes;  // [repetition][task], corpus order
    Aggregate aggregate;
};

/// Runs the corpus `repetitions` times. Each worker owns a runner made by
/// `make_runner`; outcomes go to `ledger` in corpus order after each repetition.
EvalResult evaluate(std::span<const TaskRecord> tasks, const EvalOptions& options, const Resources& res,
                    const RunnerFactory& make_runner, llm::Provider& provider, LedgerWriter* ledger = nullptr);

// ---------------------------------------------------------------------------
// Overlap

struct OverlapRow {
    std::vector<std::string> modes;  // the subset, in input mode order
    std::size_t count = 0;           // tasks fixed by exactly these modes
    std::vector<std::string> task_ids;
};

struct OverlapReport {
    std::vector<std::string> modes;
    std::vector<OverlapRow> rows;  // non-zero rows, by count descending then subset

    /// Tasks fixed by every mode in `subset` (and possibly others).
    std::size_t intersection(std::span<const std::string> subset) const;
};

/// Throws std::invalid_argument when the modes were not run on the same task ids.
OverlapReport overlap(const std::vector<std::pair<std::string, std::vector<RepairOutcome>>>& by_mode);

nlohmann::json to_json(const OverlapReport& r);

}  // namespace dsrepair::eval
