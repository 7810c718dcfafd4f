// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dsrepair/api_retrieval.hpp"
#include "dsrepair/doc_ingest.hpp"
#include "dsrepair/eval_harness.hpp"
#include "dsrepair/kg_store.hpp"
#include "dsrepair/llm_client.hpp"
#include "dsrepair/prompt_builder.hpp"
#include "dsrepair/runner.hpp"
#include "dsrepair/sparql.hpp"

namespace dsrepair::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Environment Environment::process() {
    return {[](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) return std::nullopt;
        return std::string(v);
    }};
}

Environment Environment::from_map(std::map<std::string, std::string> vars) {
    return {[vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    }};
}

namespace {

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

/// Failure that maps to a specific exit code.
struct Exit : std::runtime_error {
    Exit(int code, const std::string& msg) : std::runtime_error(msg), code(code) {}
    int code;
};

[[noreturn]] void config_error(const std::string& msg) { throw Exit(kConfigError, msg); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) config_error("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string env_name(const std::string& key) {
    std::string out = "DSREPAIR_";
    for (char c : key) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::vector<std::string> mode_names() {
    std::vector<std::string> v;
    for (auto m : prompt::kAllPromptModes) v.emplace_back(prompt::to_string(m));
    return v;
}

std::vector<std::string> richness_names() {
    std::vector<std::string> v;
    for (auto r : retrieval::kAllRichnessLevels) v.emplace_back(retrieval::to_string(r));
    return v;
}

// ---------------------------------------------------------------------------
// Settings: flag > environment > config file

class Settings {
public:
    explicit Settings(const Environment& env) : env_(env) {}

    void add(CLI::App* cmd, const std::string& key, const std::string& help) {
        auto& slot = values_[cmd->get_name() + "/" + key];
        opts_[cmd->get_name() + "/" + key] = cmd->add_option("--" + key, slot, help);
    }

    void load_config(const std::string& command) {
        std::optional<std::string> path;
        if (auto it = opts_.find(command + "/config"); it != opts_.end() && it->second->count()) {
            path = values_.at(command + "/config");
        } else {
            path = env_.get(env_name("config"));
        }
        if (path && !path->empty()) {
            if (!fs::exists(*path)) config_error("config file " + *path + " does not exist (--config)");
            file_ = parse_config_text(read_file(*path));
        }
    }

    std::optional<std::string> get(const std::string& command, const std::string& key) const {
        if (auto it = opts_.find(command + "/" + key); it != opts_.end() && it->second->count()) {
            return values_.at(command + "/" + key);
        }
        if (auto v = env_.get(env_name(key))) return v;
        if (auto it = file_.find(key); it != file_.end()) return it->second;
        return std::nullopt;
    }

    std::string get_or(const std::string& command, const std::string& key, const std::string& fallback) const {
        return get(command, key).value_or(fallback);
    }

    std::string require(const std::string& command, const std::string& key, const std::string& why) const {
        auto v = get(command, key);
        if (!v || v->empty()) config_error("missing --" + key + (why.empty() ? "" : " (" + why + ")"));
        return *v;
    }

    double number(const std::string& command, const std::string& key, double fallback) const {
        auto v = get(command, key);
        if (!v) return fallback;
        try {
            std::size_t used = 0;
            double d = std::stod(*v, &used);
            if (used != trim(*v).size() && used != v->size()) throw std::invalid_argument("trailing text");
            return d;
        } catch (const std::exception&) {
            config_error("--" + key + " expects a number, got '" + *v + "'");
        }
    }

    std::size_t count(const std::string& command, const std::string& key, std::size_t fallback) const {
        const double d = number(command, key, static_cast<double>(fallback));
        if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
            config_error("--" + key + " expects a non-negative integer");
        }
        return static_cast<std::size_t>(d);
    }

private:
    const Environment& env_;
    std::map<std::string, std::string> values_;
    std::map<std::string, CLI::Option*> opts_;
    std::map<std::string, std::string> file_;
};

fs::path existing_file(const std::string& path, const std::string& flag) {
    if (!fs::is_regular_file(path)) config_error("--" + flag + ": no such file " + path);
    return path;
}

// ---------------------------------------------------------------------------
// Providers and runners

struct ProviderBundle {
    std::unique_ptr<llm::Provider> base;
    std::unique_ptr<std::ofstream> record_stream;
    std::unique_ptr<llm::RecordingProvider> recorder;
    std::optional<llm::CostModel> prices;

    llm::Provider& get() { return recorder ? static_cast<llm::Provider&>(*recorder) : *base; }
};

void add_provider_options(Settings& s, CLI::App* cmd) {
    s.add(cmd, "provider", "LLM backend: mock, replay or http");
    s.add(cmd, "mock-rules", "Rule file for the mock provider");
    s.add(cmd, "llm-transcript", "Exchange transcript for the replay provider");
    s.add(cmd, "record-llm", "Append every exchange to this transcript");
    s.add(cmd, "endpoint", "Chat-completions URL for the http provider");
    s.add(cmd, "model", "Model name sent to the provider and used for price lookup");
    s.add(cmd, "api-key-env", "Environment variable holding the API key");
    s.add(cmd, "max-tokens", "Maximum output tokens per request");
    s.add(cmd, "request-timeout", "Provider request timeout in seconds");
    s.add(cmd, "retries", "Retries on transient provider errors");
    s.add(cmd, "rpm", "Requests per minute (0 = unlimited)");
    s.add(cmd, "input-price", "USD per 1M input tokens (overrides the built-in table)");
    s.add(cmd, "output-price", "USD per 1M output tokens (overrides the built-in table)");
}

void add_runner_options(Settings& s, CLI::App* cmd) {
    s.add(cmd, "runner-cmd", "Command that starts the sandbox runner (stdio JSON lines)");
    s.add(cmd, "runner-transcript", "Recorded runner transcript to replay instead of a live runner");
    s.add(cmd, "record-runner", "Append every runner exchange to this transcript");
    s.add(cmd, "timeout", "Per-statement runner timeout in seconds (max 60)");
}

void add_repair_options(Settings& s, CLI::App* cmd) {
    s.add(cmd, "config", "key = value config file");
    s.add(cmd, "kg", "Knowledge graph dump");
    s.add(cmd, "richness", "API knowledge richness: " + join(richness_names(), ", "));
    s.add(cmd, "retrieval", "API knowledge source: kg or plain_text");
    s.add(cmd, "docs-dir", "Directory of plain-text documentation (plain_text retrieval)");
    s.add(cmd, "scope", "Invocations used for retrieval: all, failing_first or failing_only");
    s.add(cmd, "templates", "Directory with prompt template overrides");
    add_provider_options(s, cmd);
    add_runner_options(s, cmd);
}

std::optional<llm::CostModel> resolve_prices(const Settings& s, const std::string& cmd) {
    const auto in = s.get(cmd, "input-price");
    const auto out = s.get(cmd, "output-price");
    if (in || out) {
        if (!in || !out) config_error("--input-price and --output-price must be given together");
        const double i = s.number(cmd, "input-price", 0);
        const double o = s.number(cmd, "output-price", 0);
        if (i < 0 || o < 0) config_error("prices must be non-negative");
        return llm::CostModel::per_million(i, o);
    }
    return llm::known_prices(s.get_or(cmd, "model", "gpt-3.5-turbo"));
}

/// Validates paths only; nothing is contacted.
void check_provider_paths(const Settings& s, const std::string& cmd) {
    const auto kind = s.get_or(cmd, "provider", "");
    if (kind == "mock") existing_file(s.require(cmd, "mock-rules", "mock provider"), "mock-rules");
    else if (kind == "replay") existing_file(s.require(cmd, "llm-transcript", "replay provider"), "llm-transcript");
    else if (kind == "http") {
    } else if (kind.empty()) config_error("missing --provider (mock, replay or http)");
    else config_error("--provider must be mock, replay or http, got '" + kind + "'");
}

ProviderBundle make_provider(const Settings& s, const std::string& cmd) {
    ProviderBundle b;
    const auto kind = s.get_or(cmd, "provider", "");
    try {
        if (kind == "mock") {
            b.base = std::make_unique<llm::MockProvider>(llm::MockProvider::from_file(s.require(cmd, "mock-rules", "")));
        } else if (kind == "replay") {
            b.base = llm::ReplayProvider::from_file(s.require(cmd, "llm-transcript", ""));
        } else {
            llm::ProviderConfig cfg;
            cfg.endpoint = s.get_or(cmd, "endpoint", cfg.endpoint);
            cfg.model_name = s.get_or(cmd, "model", cfg.model_name);
            cfg.api_key_env = s.get_or(cmd, "api-key-env", cfg.api_key_env);
            cfg.max_output_tokens = static_cast<std::uint32_t>(s.count(cmd, "max-tokens", cfg.max_output_tokens));
            cfg.request_timeout_s = s.number(cmd, "request-timeout", cfg.request_timeout_s);
            cfg.retries = static_cast<std::uint32_t>(s.count(cmd, "retries", cfg.retries));
            cfg.requests_per_minute = s.number(cmd, "rpm", cfg.requests_per_minute);
            b.base = std::make_unique<llm::HttpProvider>(cfg);
        }
    } catch (const llm::AuthError& e) {
        config_error(e.what());
    } catch (const std::invalid_argument& e) {
        config_error(e.what());
    }
    if (auto rec = s.get(cmd, "record-llm")) {
        b.record_stream = std::make_unique<std::ofstream>(*rec, std::ios::app | std::ios::binary);
        if (!*b.record_stream) config_error("cannot open --record-llm " + *rec);
        b.recorder = std::make_unique<llm::RecordingProvider>(*b.base, *b.record_stream);
    }
    b.prices = resolve_prices(s, cmd);
    return b;
}

class OwningRecorder final : public runner::Runner {
public:
    OwningRecorder(std::unique_ptr<runner::Runner> inner, std::shared_ptr<std::ofstream> out)
        : inner_(std::move(inner)), out_(std::move(out)), rec_(*inner_, *out_) {}
    runner::RunResponse run(const runner::RunRequest& r) override { return rec_.run(r); }

private:
    std::unique_ptr<runner::Runner> inner_;
    std::shared_ptr<std::ofstream> out_;
    runner::RecordingRunner rec_;
};

struct RunnerSetup {
    eval::RunnerFactory factory;
    double timeout_s = 10.0;
};

RunnerSetup make_runner_factory(const Settings& s, const std::string& cmd) {
    RunnerSetup setup;
    setup.timeout_s = s.number(cmd, "timeout", 10.0);
    if (!(setup.timeout_s > 0) || setup.timeout_s > runner::kMaxTimeoutSeconds) config_error("--timeout must be in (0, 60]");

    std::function<std::unique_ptr<runner::Runner>()> base;
    if (auto t = s.get(cmd, "runner-transcript")) {
        existing_file(*t, "runner-transcript");
        std::shared_ptr<runner::ReplayRunner> replay;
        try {
            replay = std::make_shared<runner::ReplayRunner>(runner::ReplayRunner::from_file(*t));
        } catch (const runner::RunnerError& e) {
            config_error(e.what());
        }
        base = [replay] { return std::make_unique<runner::ReplayRunner>(*replay); };
    } else if (auto c = s.get(cmd, "runner-cmd")) {
        std::vector<std::string> argv;
        try {
            argv = runner::split_command(*c);
        } catch (const std::invalid_argument& e) {
            config_error(std::string("--runner-cmd: ") + e.what());
        }
        if (argv.empty()) config_error("--runner-cmd is empty");
        base = [argv] { return std::make_unique<runner::ProcessRunner>(runner::ProcessOptions{argv, 5.0}); };
    } else {
        config_error("missing --runner-cmd or --runner-transcript");
    }

    if (auto rec = s.get(cmd, "record-runner")) {
        auto stream = std::make_shared<std::ofstream>(*rec, std::ios::app | std::ios::binary);
        if (!*stream) config_error("cannot open --record-runner " + *rec);
        setup.factory = [base, stream] { return std::make_unique<OwningRecorder>(base(), stream); };
    } else {
        setup.factory = base;
    }
    return setup;
}

// ---------------------------------------------------------------------------
// Shared repair/eval resources

struct RepairEnv {
    std::optional<kg::KnowledgeGraph> graph;
    std::optional<std::vector<std::string>> documents;
    std::optional<prompt::TemplateSet> templates;

    eval::Resources resources() const {
        return {graph ? &*graph : nullptr, documents ? &*documents : nullptr, templates ? &*templates : nullptr};
    }
};

prompt::PromptMode parse_mode(const std::string& v) {
    auto m = prompt::mode_from_string(v);
    if (!m) config_error("--mode must be one of: " + join(mode_names(), ", ") + "; got '" + v + "'");
    return *m;
}

retrieval::RichnessLevel parse_richness(const std::string& v) {
    auto r = retrieval::richness_from_string(v);
    if (!r) config_error("--richness must be one of: " + join(richness_names(), ", ") + "; got '" + v + "'");
    return *r;
}

eval::RepairSettings base_settings(const Settings& s, const std::string& cmd) {
    eval::RepairSettings rs;
    rs.richness = parse_richness(s.get_or(cmd, "richness", "plus_both"));
    const auto src = eval::knowledge_source_from_string(s.get_or(cmd, "retrieval", "kg"));
    if (!src) config_error("--retrieval must be kg or plain_text");
    rs.source = *src;
    const auto scope = retrieval::scope_from_string(s.get_or(cmd, "scope", "failing_first"));
    if (!scope) config_error("--scope must be all, failing_first or failing_only");
    rs.scope = *scope;
    return rs;
}

/// Loads what `modes` need; every path is checked before anything is parsed.
RepairEnv load_repair_env(const Settings& s, const std::string& cmd, const std::vector<prompt::PromptMode>& modes,
                          eval::KnowledgeSource source) {
    const bool api = std::any_of(modes.begin(), modes.end(), prompt::uses_api_knowledge);
    std::string needing;
    for (auto m : modes) {
        if (prompt::uses_api_knowledge(m)) {
            needing = std::string(prompt::to_string(m));
            break;
        }
    }

    std::optional<fs::path> kg_path;
    std::optional<fs::path> docs_dir;
    std::optional<fs::path> templates_dir;
    if (api && source == eval::KnowledgeSource::kg) {
        kg_path = existing_file(s.require(cmd, "kg", "required by mode " + needing), "kg");
    } else if (auto k = s.get(cmd, "kg")) {
        kg_path = existing_file(*k, "kg");
    }
    if (api && source == eval::KnowledgeSource::plain_text) {
        docs_dir = s.require(cmd, "docs-dir", "required by plain_text retrieval");
        if (!fs::is_directory(*docs_dir)) config_error("--docs-dir: no such directory " + docs_dir->string());
    }
    if (auto t = s.get(cmd, "templates")) {
        templates_dir = *t;
        if (!fs::is_directory(*templates_dir)) config_error("--templates: no such directory " + *t);
    }

    RepairEnv env;
    try {
        if (kg_path) env.graph = kg::load_dump(read_file(*kg_path));
        if (docs_dir) env.documents = retrieval::load_text_corpus(*docs_dir);
        if (templates_dir) env.templates = prompt::TemplateSet::load(*templates_dir);
    } catch (const Exit&) {
        throw;
    } catch (const std::exception& e) {
        config_error(e.what());
    }
    return env;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_kg_build(const Settings& s, std::ostream& out, std::ostream& err) {
    const auto docs = existing_file(s.require("build", "docs", ""), "docs");
    const auto dest = s.require("build", "out", "");
    auto result = ingest::ingest_corpus(docs);
    for (const auto& e : result.errors) err << docs.string() << ":" << e.line << ": " << e.message << "\n";
    if (!result.errors.empty()) {
        err << result.errors.size() << " invalid record(s); no dump written\n";
        return kConfigError;
    }
    std::ofstream f(dest, std::ios::binary | std::ios::trunc);
    if (!f) config_error("cannot write " + dest);
    f << kg::save_dump(result.graph);
    out << "wrote " << result.graph.size() << " triples from " << result.records << " records to " << dest << "\n";
    return kSuccess;
}

int cmd_kg_query(const Settings& s, std::ostream& out, std::ostream& err) {
    const auto path = existing_file(s.require("query", "kg", ""), "kg");
    std::string text;
    if (auto q = s.get("query", "select")) {
        text = *q;
    } else if (auto f = s.get("query", "select-file")) {
        text = read_file(existing_file(*f, "select-file"));
    } else {
        config_error("missing --select or --select-file");
    }
    kg::KnowledgeGraph g;
    try {
        g = kg::load_dump(read_file(path));
    } catch (const std::exception& e) {
        config_error(path.string() + ": " + e.what());
    }
    try {
        const auto q = kg::parse_select(text);
        out << kg::format_rows(q, kg::execute(g, q));
    } catch (const kg::QuerySyntaxError& e) {
        err << "query:" << e.what() << "\n";
        return kConfigError;
    }
    return kSuccess;
}

eval::TaskRecord load_task(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        const auto trimmed = trim(text);
        if (trimmed.find('\n') == std::string::npos || trimmed.front() == '{') {
            try {
                return eval::task_from_json(json::parse(trimmed));
            } catch (const json::parse_error&) {
                // fall through: maybe JSON lines
            }
        }
        auto corpus = eval::load_corpus_text(text);
        if (!corpus.errors.empty()) config_error(path.string() + ":" + std::to_string(corpus.errors.front().line) + ": " + corpus.errors.front().message);
        if (corpus.tasks.size() != 1) config_error(path.string() + ": expected exactly one task");
        return corpus.tasks.front();
    } catch (const Exit&) {
        throw;
    } catch (const std::exception& e) {
        config_error(path.string() + ": " + e.what());
    }
}

bool runner_failed(const eval::RepairOutcome& o) { return o.runner_failure; }

int cmd_repair(const Settings& s, std::ostream& out, std::ostream& err) {
    const std::string cmd = "repair";
    const auto task_path = existing_file(s.require(cmd, "task", ""), "task");
    auto settings = base_settings(s, cmd);
    settings.mode = parse_mode(s.get_or(cmd, "mode", "dsrepair"));
    check_provider_paths(s, cmd);
    auto runners = make_runner_factory(s, cmd);
    settings.timeout_s = runners.timeout_s;
    const auto env = load_repair_env(s, cmd, {settings.mode}, settings.source);
    const auto task = load_task(task_path);

    auto provider = make_provider(s, cmd);
    auto runner = runners.factory();
    eval::RepairOutcome outcome;
    try {
        outcome = eval::repair_task(task, settings, env.resources(), *runner, provider.get());
    } catch (const std::invalid_argument& e) {
        config_error(e.what());
    }

    if (auto ledger_path = s.get(cmd, "ledger")) {
        std::ofstream f(*ledger_path, std::ios::app | std::ios::binary);
        if (!f) config_error("cannot open --ledger " + *ledger_path);
        eval::LedgerWriter(f).append(outcome);
    }
    if (!outcome.patched_code.empty()) out << outcome.patched_code << "\n";
    json summary = eval::to_json(outcome);
    summary.erase("exchanges");
    summary["exchanges"] = outcome.exchanges.size();
    out << summary.dump() << "\n";

    switch (outcome.status) {
        case eval::OutcomeStatus::fixed:
        case eval::OutcomeStatus::not_buggy: return kSuccess;
        case eval::OutcomeStatus::llm_error:
            err << "provider error: " << outcome.note << "\n";
            return kProviderError;
        case eval::OutcomeStatus::failed:
            if (runner_failed(outcome)) {
                err << "runner error: " << outcome.note << "\n";
                return kRunnerError;
            }
            return kTestsFailed;
    }
    return kTestsFailed;
}

std::string summary_line(const std::string& label, const eval::Aggregate& a) {
    const auto& m = a.median();
    std::ostringstream os;
    os << std::left << std::setw(22) << label << " ANF " << std::setw(5) << m.anf << " FR "
       << std::setw(8) << eval::format_rate(m.anf, m.n_tasks) << " N " << std::setw(5) << m.n_tasks
       << " TU " << std::fixed << std::setprecision(2) << std::setw(10) << m.tu << " MS ";
    if (m.ms) {
        os << "$" << std::setprecision(5) << *m.ms;
    } else {
        os << "n/a";
    }
    os << "  mean ANF " << eval::format_mean_std(a.mean_anf, a.std_anf);
    if (m.usage_unknown) os << "  (" << m.usage_unknown << " exchanges without usage)";
    return os.str();
}

json aggregate_json(const eval::Aggregate& a) {
    json reps = json::array();
    for (const auto& r : a.repetitions) reps.push_back(eval::to_json(r));
    return json{{"repetitions", std::move(reps)},
                {"median_index", a.median_index},
                {"mean_anf", a.mean_anf},
                {"std_anf", a.std_anf},
                {"mean_std_display", eval::format_mean_std(a.mean_anf, a.std_anf)}};
}

int cmd_eval(const Settings& s, std::ostream& out, std::ostream& err) {
    const std::string cmd = "eval";
    const auto corpus_path = existing_file(s.require(cmd, "corpus", ""), "corpus");
    const fs::path out_dir = s.require(cmd, "out", "output directory");
    auto settings = base_settings(s, cmd);
    const auto mode_arg = s.get_or(cmd, "mode", "dsrepair");
    std::vector<prompt::PromptMode> modes;
    if (mode_arg == "all") {
        modes.assign(std::begin(prompt::kAllPromptModes), std::end(prompt::kAllPromptModes));
    } else {
        std::stringstream ss(mode_arg);
        for (std::string part; std::getline(ss, part, ',');) modes.push_back(parse_mode(trim(part)));
    }
    const std::size_t repetitions = s.count(cmd, "repetitions", 1);
    if (repetitions == 0) config_error("--repetitions must be at least 1");
    const std::size_t workers = s.count(cmd, "workers", 1);
    if (workers == 0) config_error("--workers must be at least 1");
    check_provider_paths(s, cmd);
    auto runners = make_runner_factory(s, cmd);
    settings.timeout_s = runners.timeout_s;
    const auto env = load_repair_env(s, cmd, modes, settings.source);

    const auto corpus = eval::load_corpus(corpus_path);
    for (const auto& e : corpus.errors) err << corpus_path.string() << ":" << e.line << ": " << e.message << "\n";

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) config_error("cannot create --out " + out_dir.string() + ": " + ec.message());
    std::ofstream ledger_file(out_dir / "ledger.jsonl", std::ios::binary | std::ios::trunc);
    if (!ledger_file) config_error("cannot write " + (out_dir / "ledger.jsonl").string());
    eval::LedgerWriter ledger(ledger_file);

    auto provider = make_provider(s, cmd);
    std::vector<std::pair<std::string, std::vector<eval::RepairOutcome>>> medians;
    std::ostringstream table;
    std::size_t llm_errors = 0;
    std::size_t runner_errors = 0;
    for (auto mode : modes) {
        eval::EvalOptions opts;
        opts.settings = settings;
        opts.settings.mode = mode;
        opts.repetitions = repetitions;
        opts.workers = workers;
        opts.prices = provider.prices;
        eval::EvalResult result;
        try {
            result = eval::evaluate(corpus.tasks, opts, env.resources(), runners.factory, provider.get(), &ledger);
        } catch (const std::invalid_argument& e) {
            config_error(e.what());
        }
        const std::string name(prompt::to_string(mode));
        for (const auto& rep : result.outcomes) {
            for (const auto& o : rep) {
                llm_errors += o.status == eval::OutcomeStatus::llm_error;
                runner_errors += runner_failed(o);
            }
        }
        std::ofstream mf(out_dir / ("metrics_" + name + ".json"), std::ios::binary | std::ios::trunc);
        json mj = aggregate_json(result.aggregate);
        mj["mode"] = name;
        mj["richness"] = retrieval::to_string(settings.richness);
        mf << mj.dump(2) << "\n";
        table << summary_line(name, result.aggregate) << "\n";
        medians.emplace_back(name, result.outcomes.at(result.aggregate.median_index));
    }

    const auto report = eval::overlap(medians);
    std::ofstream(out_dir / "overlap.json", std::ios::binary | std::ios::trunc) << eval::to_json(report).dump(2) << "\n";
    std::ofstream(out_dir / "summary.txt", std::ios::binary | std::ios::trunc) << table.str();
    out << table.str();
    if (llm_errors) err << llm_errors << " task(s) ended with a provider error\n";
    if (runner_errors) err << runner_errors << " task(s) hit a runner failure\n";
    return kSuccess;
}

int cmd_report(const Settings& s, std::ostream& out, std::ostream&) {
    const std::string cmd = "report";
    const auto path = existing_file(s.require(cmd, "ledger", ""), "ledger");
    std::vector<eval::RepairOutcome> ledger;
    try {
        ledger = eval::read_ledger(path);
    } catch (const std::exception& e) {
        config_error(e.what());
    }
    const auto prices = resolve_prices(s, cmd);
    const auto runs = eval::recompute(ledger, prices);

    // Group repetitions per (mode, richness) and summarize like eval does.
    std::map<std::pair<prompt::PromptMode, retrieval::RichnessLevel>, std::vector<eval::RunMetrics>> grouped;
    for (const auto& [key, m] : runs) grouped[{key.mode, key.richness}].push_back(m);
    json all = json::array();
    for (auto& [key, reps] : grouped) {
        const auto agg = eval::summarize(reps);
        const std::string label = std::string(prompt::to_string(key.first)) + "/" + std::string(retrieval::to_string(key.second));
        out << summary_line(label, agg) << "\n";
        json j = aggregate_json(agg);
        j["mode"] = prompt::to_string(key.first);
        j["richness"] = retrieval::to_string(key.second);
        all.push_back(std::move(j));
    }
    if (auto json_out = s.get(cmd, "json")) {
        std::ofstream f(*json_out, std::ios::binary | std::ios::trunc);
        if (!f) config_error("cannot write --json " + *json_out);
        f << all.dump(2) << "\n";
    }
    return kSuccess;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) config_error("config line " + std::to_string(number) + ": expected key = value");
        auto key = trim(std::string_view(t).substr(0, eq));
        if (key.starts_with("--")) key.erase(0, 2);
        if (key.empty()) config_error("config line " + std::to_string(number) + ": empty key");
        out[key] = trim(std::string_view(t).substr(eq + 1));
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Environment& env) {
    CLI::App app{"Data-science code repair with API and bug knowledge", "dsrepair"};
    app.require_subcommand(1);
    app.footer("Modes: " + join(mode_names(), ", ") + ", all (eval only)\nRichness levels: " + join(richness_names(), ", ") +
               "\nExit codes: 0 success, 1 tests failed, 2 config error, 3 provider error, 4 runner error\n"
               "Settings: flag > DSREPAIR_<FLAG> environment variable > --config file (key = value)");
    Settings s(env);

    auto* kg_cmd = app.add_subcommand("kg", "Build or query the API knowledge graph");
    kg_cmd->require_subcommand(1);
    auto* build = kg_cmd->add_subcommand("build", "Ingest documentation records into a dump");
    s.add(build, "config", "key = value config file");
    s.add(build, "docs", "Documentation records (JSON lines)");
    s.add(build, "out", "Dump file to write");
    auto* query = kg_cmd->add_subcommand("query", "Run a SELECT query against a dump");
    s.add(query, "config", "key = value config file");
    s.add(query, "kg", "Knowledge graph dump");
    s.add(query, "select", "Query text");
    s.add(query, "select-file", "File holding the query text");

    auto* repair = app.add_subcommand("repair", "Repair a single task");
    s.add(repair, "task", "Task record (JSON object or one JSON line)");
    s.add(repair, "mode", "Prompt mode: " + join(mode_names(), ", "));
    s.add(repair, "ledger", "Append the outcome to this ledger");
    add_repair_options(s, repair);

    auto* evalc = app.add_subcommand("eval", "Evaluate a corpus");
    s.add(evalc, "corpus", "Task corpus (JSON lines)");
    s.add(evalc, "mode", "Prompt mode, comma-separated list, or all: " + join(mode_names(), ", "));
    s.add(evalc, "repetitions", "Runs over the corpus (median by ANF is reported)");
    s.add(evalc, "workers", "Parallel tasks per repetition");
    s.add(evalc, "out", "Output directory for ledger, metrics and overlap files");
    add_repair_options(s, evalc);

    auto* report = app.add_subcommand("report", "Recompute metrics from a ledger");
    s.add(report, "config", "key = value config file");
    s.add(report, "ledger", "Outcome ledger (JSON lines)");
    s.add(report, "model", "Model name for price lookup");
    s.add(report, "input-price", "USD per 1M input tokens");
    s.add(report, "output-price", "USD per 1M output tokens");
    s.add(report, "json", "Write the recomputed metrics here");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kConfigError;
    }

    try {
        if (build->parsed()) {
            s.load_config("build");
            return cmd_kg_build(s, out, err);
        }
        if (query->parsed()) {
            s.load_config("query");
            return cmd_kg_query(s, out, err);
        }
        if (repair->parsed()) {
            s.load_config("repair");
            return cmd_repair(s, out, err);
        }
        if (evalc->parsed()) {
            s.load_config("eval");
            return cmd_eval(s, out, err);
        }
        if (report->parsed()) {
            s.load_config("report");
            return cmd_report(s, out, err);
        }
    } catch (const Exit& e) {
        err << "error: " << e.what() << "\n";
        return e.code;
    } catch (const llm::LlmError& e) {
        err << "provider error: " << e.what() << "\n";
        return kProviderError;
    } catch (const runner::RunnerError& e) {
        err << "runner error: " << e.what() << "\n";
        return kRunnerError;
    }
    return kConfigError;
}

}  // namespace dsrepair::cli
