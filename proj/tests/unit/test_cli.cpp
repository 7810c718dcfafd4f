// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include <nlohmann/json.hpp>

#include "dsrepair/cli.hpp"
#include "dsrepair/eval_harness.hpp"
#include "test_support.hpp"

using namespace dsrepair;
namespace dt = dsrepair::testing;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = cli::run(args, out, err, cli::Environment::from_map(std::move(env)));
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string e2e(const std::string& name) { return dt::fixture("e2e/" + name).string(); }

/// Builds the sample graph dump once per test binary.
const std::string& kg_dump() {
    static dt::TempDir dir;
    static const std::string path = [] {
        const auto p = (dir.path() / "kg.dump").string();
        auto r = run({"kg", "build", "--docs", (dt::data_dir() / "sample_api_docs.jsonl").string(), "--out", p});
        if (r.code != 0) throw std::runtime_error("kg build failed: " + r.err);
        return p;
    }();
    return path;
}

std::string task_file(dt::TempDir& dir, const std::string& id) {
    for (const auto& line : dt::read_lines(dt::fixture("e2e/corpus.jsonl"))) {
        if (line.find("\"id\": \"" + id + "\"") != std::string::npos) {
            dir.write(id + ".json", line);
            return (dir.path() / (id + ".json")).string();
        }
    }
    throw std::runtime_error("no task " + id);
}

std::vector<std::string> replay_args() {
    return {"--provider", "mock", "--mock-rules", e2e("mock.json"), "--runner-transcript", e2e("runner_transcript.jsonl")};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("help and usage errors") {
    auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("Exit codes") != std::string::npos);
    CHECK(run({}).code == cli::kConfigError);
    CHECK(run({"frobnicate"}).code == cli::kConfigError);
    CHECK(run({"repair", "--no-such-flag", "x"}).code == cli::kConfigError);
    CHECK(run({"eval", "--help"}).code == 0);
}

TEST_CASE("kg build and query") {
    const auto& dump = kg_dump();
    auto q = run({"kg", "query", "--kg", dump, "--select",
                  "SELECT ?e WHERE { ds:numpy.flipud has_expression ?e }"});
    REQUIRE(q.code == 0);
    CHECK(q.out.find("numpy.flipud(m)") != std::string::npos);

    auto bad = run({"kg", "query", "--kg", dump, "--select", "SELECT ?e WHERE { ds:x has_expression }"});
    CHECK(bad.code == cli::kConfigError);
    CHECK(bad.err.starts_with("query:1:"));

    CHECK(run({"kg", "query", "--kg", "/nonexistent.dump", "--select", "SELECT ?x WHERE { ?x has_name ?y }"}).code ==
          cli::kConfigError);
    CHECK(run({"kg", "query", "--kg", dump}).code == cli::kConfigError);
}

TEST_CASE("kg build refuses invalid records") {
    dt::TempDir dir;
    dir.write("docs.jsonl", "{\"qualified_name\": \"numpy.x\"}\n");
    const auto out = (dir.path() / "out.dump").string();
    auto r = run({"kg", "build", "--docs", (dir.path() / "docs.jsonl").string(), "--out", out});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find(":1:") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("repair exit codes follow the outcome") {
    dt::TempDir dir;
    // np-01 is fixed in every mode, np-02 is not fixed by chat_repair.
    auto ok = run(concat({"repair", "--task", task_file(dir, "np-01"), "--kg", kg_dump()}, replay_args()));
    CHECK(ok.code == cli::kSuccess);
    CHECK(ok.out.starts_with("A = np.array([1, 2, 3, 4, 5, 6, 7])\nncol = 2\nB = np.array_split(A, ncol)[::-1]\n"));

    const auto ledger = (dir.path() / "ledger.jsonl").string();
    auto fail = run(concat({"repair", "--task", task_file(dir, "np-02"), "--mode", "chat_repair", "--ledger", ledger},
                           replay_args()));
    CHECK(fail.code == cli::kTestsFailed);
    auto rows = eval::read_ledger(ledger);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].task_id == "np-02");
    CHECK(rows[0].status == eval::OutcomeStatus::failed);
}

TEST_CASE("repair maps provider and runner failures to their exit codes") {
    dt::TempDir dir;
    dir.write("empty.json", "{}");
    auto p = run({"repair", "--task", task_file(dir, "np-01"), "--mode", "chat_repair", "--provider", "mock",
                  "--mock-rules", (dir.path() / "empty.json").string(), "--runner-transcript",
                  e2e("runner_transcript.jsonl")});
    CHECK(p.code == cli::kProviderError);

    auto r = run({"repair", "--task", task_file(dir, "np-01"), "--mode", "chat_repair", "--provider", "mock",
                  "--mock-rules", e2e("mock.json"), "--runner-cmd", "/nonexistent/runner"});
    CHECK(r.code == cli::kRunnerError);
}

TEST_CASE("paths are validated before the provider is built") {
    dt::TempDir dir;
    const std::map<std::string, std::string> no_key = {};
    auto missing_kg = run({"repair", "--task", task_file(dir, "np-01"), "--provider", "http", "--api-key-env",
                           "DSREPAIR_UNSET_KEY", "--runner-transcript", e2e("runner_transcript.jsonl")},
                          no_key);
    CHECK(missing_kg.code == cli::kConfigError);
    CHECK(missing_kg.err.find("--kg") != std::string::npos);
    CHECK(missing_kg.err.find("DSREPAIR_UNSET_KEY") == std::string::npos);

    auto missing_rules = run({"repair", "--task", task_file(dir, "np-01"), "--kg", kg_dump(), "--provider", "mock",
                              "--mock-rules", "/nonexistent/mock.json", "--runner-transcript",
                              e2e("runner_transcript.jsonl")});
    CHECK(missing_rules.code == cli::kConfigError);
    CHECK(missing_rules.err.find("--mock-rules") != std::string::npos);

    auto no_key_env = run({"repair", "--task", task_file(dir, "np-01"), "--kg", kg_dump(), "--provider", "http",
                           "--api-key-env", "DSREPAIR_UNSET_KEY", "--runner-transcript", e2e("runner_transcript.jsonl")});
    CHECK(no_key_env.code == cli::kConfigError);
    CHECK(no_key_env.err.find("DSREPAIR_UNSET_KEY") != std::string::npos);

    auto bad_timeout = run(concat({"repair", "--task", task_file(dir, "np-01"), "--kg", kg_dump(), "--timeout", "61"},
                                  replay_args()));
    CHECK(bad_timeout.code == cli::kConfigError);
    auto bad_mode = run(concat({"repair", "--task", task_file(dir, "np-01"), "--mode", "magic"}, replay_args()));
    CHECK(bad_mode.code == cli::kConfigError);
    CHECK(bad_mode.err.find("dsrepair_wo_api") != std::string::npos);
    auto no_runner = run({"repair", "--task", task_file(dir, "np-01"), "--kg", kg_dump(), "--provider", "mock",
                          "--mock-rules", e2e("mock.json")});
    CHECK(no_runner.code == cli::kConfigError);
}

TEST_CASE("settings precedence: flag, then environment, then config file") {
    dt::TempDir dir;
    eval::RepairOutcome o;
    o.task_id = "t";
    o.library = "numpy";
    o.status = eval::OutcomeStatus::fixed;
    o.passed = true;
    o.exchanges.push_back(llm::ChatExchange{"p", "r", llm::Usage{1'000'000, 0}, 0, "mock"});
    dir.write("ledger.jsonl", eval::to_json(o).dump() + "\n");
    dir.write("cfg.txt", "# prices\ninput-price = 3\noutput-price = 0\n");
    const auto ledger = (dir.path() / "ledger.jsonl").string();
    const auto cfg = (dir.path() / "cfg.txt").string();
    const auto out = (dir.path() / "m.json").string();

    auto ms = [&](std::vector<std::string> extra, std::map<std::string, std::string> env) {
        auto r = run(concat({"report", "--ledger", ledger, "--json", out}, extra), std::move(env));
        REQUIRE(r.code == 0);
        return json::parse(dt::read_file(out)).at(0).at("repetitions").at(0).at("ms").get<double>();
    };
    // Built-in table for the default model: $0.50 per 1M input tokens.
    CHECK(ms({}, {}) == Catch::Approx(0.50));
    CHECK(ms({"--config", cfg}, {}) == Catch::Approx(3.0));
    CHECK(ms({}, {{"DSREPAIR_CONFIG", cfg}}) == Catch::Approx(3.0));
    CHECK(ms({"--config", cfg}, {{"DSREPAIR_INPUT_PRICE", "2"}}) == Catch::Approx(2.0));
    CHECK(ms({"--config", cfg, "--input-price", "1"}, {{"DSREPAIR_INPUT_PRICE", "2"}}) == Catch::Approx(1.0));
    CHECK(ms({"--model", "codestral"}, {}) == Catch::Approx(1.0));

    CHECK(run({"report", "--ledger", ledger, "--config", "/nonexistent.cfg"}).code == cli::kConfigError);
    CHECK(run({"report", "--ledger", ledger, "--input-price", "1"}).code == cli::kConfigError);
    CHECK(run({"report", "--ledger", ledger, "--input-price", "x", "--output-price", "1"}).code == cli::kConfigError);
}

TEST_CASE("config file parsing") {
    auto c = cli::parse_config_text("# comment\n\n  kg = /tmp/a b \n--mode=chat_repair\nempty =\n");
    CHECK(c.at("kg") == "/tmp/a b");
    CHECK(c.at("mode") == "chat_repair");
    CHECK(c.at("empty").empty());
    CHECK_THROWS(cli::parse_config_text("no equals sign\n"));
    CHECK_THROWS(cli::parse_config_text(" = value\n"));
}

TEST_CASE("eval writes ledger, metrics and overlap; report recomputes them") {
    dt::TempDir dir;
    const auto out = (dir.path() / "run").string();
    auto r = run(concat({"eval", "--corpus", e2e("corpus.jsonl"), "--mode", "dsrepair,chat_repair,self_repair", "--kg",
                         kg_dump(), "--out", out, "--workers", "3", "--repetitions", "2"},
                        replay_args()));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("dsrepair               ANF 7     FR 70.00%") != std::string::npos);

    const auto expected = json::parse(dt::read_file(dt::fixture("e2e/expected.json")));
    for (const std::string mode : {"dsrepair", "chat_repair", "self_repair"}) {
        auto m = json::parse(dt::read_file(dir.path() / "run" / ("metrics_" + mode + ".json")));
        CHECK(m.at("repetitions").size() == 2);
        CHECK(m.at("repetitions").at(0).at("anf") == expected.at("anf").at(mode));
        CHECK(m.at("mean_std_display") == std::to_string(expected.at("anf").at(mode).get<int>()) + ".00 \xC2\xB1 0.00");
    }
    auto ov = json::parse(dt::read_file(dir.path() / "run" / "overlap.json"));
    CHECK(ov.at("rows").size() == expected.at("overlap_rows").size());

    const auto ledger = (dir.path() / "run" / "ledger.jsonl").string();
    CHECK(eval::read_ledger(ledger).size() == 3 * 2 * 10);
    const auto recomputed = (dir.path() / "recomputed.json").string();
    auto rep = run({"report", "--ledger", ledger, "--json", recomputed});
    REQUIRE(rep.code == 0);
    for (const auto& entry : json::parse(dt::read_file(recomputed))) {
        const std::string mode = entry.at("mode");
        auto m = json::parse(dt::read_file(dir.path() / "run" / ("metrics_" + mode + ".json")));
        CHECK(entry.at("repetitions") == m.at("repetitions"));
    }
}

TEST_CASE("eval needs a corpus and an output directory") {
    CHECK(run(concat({"eval", "--out", "/tmp/x"}, replay_args())).code == cli::kConfigError);
    auto r = run(concat({"eval", "--corpus", e2e("corpus.jsonl"), "--kg", kg_dump()}, replay_args()));
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("--out") != std::string::npos);
    CHECK(run(concat({"eval", "--corpus", e2e("corpus.jsonl"), "--out", "/tmp/x", "--repetitions", "0"}, replay_args()))
              .code == cli::kConfigError);
}
