// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dsrepair/llm_client.hpp"

using namespace dsrepair::llm;
using nlohmann::json;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Independent per-request sum in long double.
long double reference_cost(const std::vector<Usage>& us, long double in_per_m, long double out_per_m) {
    long double total = 0;
    for (const auto& u : us) total += u.input_tokens * in_per_m / 1e6L + u.output_tokens * out_per_m / 1e6L;
    return total;
}

// A chat-completions stand-in whose answers are scripted per request.
class StubServer {
public:
    struct Reply {
        int status = 200;
        std::string body;
        std::string retry_after;
    };

    StubServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            bodies_.push_back(req.body);
            auth_.push_back(req.get_header_value("Authorization"));
            Reply r = replies_.empty() ? ok("fallback") : replies_.front();
            if (!replies_.empty()) replies_.erase(replies_.begin());
            res.status = r.status;
            if (!r.retry_after.empty()) res.set_header("Retry-After", r.retry_after);
            res.set_content(r.body, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    static Reply ok(const std::string& content, bool with_usage = true) {
        json body = {{"choices", json::array({json{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
        if (with_usage) body["usage"] = {{"prompt_tokens", 12}, {"completion_tokens", 5}, {"total_tokens", 17}};
        return Reply{200, body.dump(), ""};
    }

    void script(std::vector<Reply> r) {
        std::lock_guard lock(mu_);
        replies_ = std::move(r);
    }
    std::size_t requests() {
        std::lock_guard lock(mu_);
        return bodies_.size();
    }
    std::string last_body() {
        std::lock_guard lock(mu_);
        return bodies_.back();
    }
    std::string last_auth() {
        std::lock_guard lock(mu_);
        return auth_.back();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mu_;
    std::vector<Reply> replies_;
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_;
};

constexpr const char* kKeyVar = "DSREPAIR_TEST_KEY";
constexpr const char* kKey = "sk-test-0123456789abcdef";

struct Fixture {
    StubServer server;
    std::vector<double> sleeps;

    Fixture() { ::setenv(kKeyVar, kKey, 1); }

    HttpProvider provider(std::uint32_t retries = 3) {
        ProviderConfig cfg;
        cfg.endpoint = server.endpoint();
        cfg.api_key_env = kKeyVar;
        cfg.retries = retries;
        cfg.backoff_initial_s = 0.5;
        cfg.request_timeout_s = 5;
        return HttpProvider(cfg, [this](double s) { sleeps.push_back(s); });
    }
};

}  // namespace

TEST_CASE("cost of one GPT-3.5 request") {
    const auto m = CostModel::per_million(0.50, 1.50);
    const std::vector<Usage> one = {{1000, 500}};
    CHECK_THAT(cost(one, m), WithinAbs(0.00125, 1e-12));
    CHECK(cost(std::vector<Usage>{}, m) == 0.0);
}

TEST_CASE("cost is additive and matches a per-request oracle") {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<std::uint64_t> tokens(0, 20000);
    const auto m = CostModel::per_million(0.50, 1.50);
    for (int round = 0; round < 100; ++round) {
        std::vector<Usage> us(std::uniform_int_distribution<int>(0, 40)(rng));
        for (auto& u : us) u = {tokens(rng), tokens(rng)};
        const double total = cost(us, m);
        CHECK_THAT(total, WithinAbs(static_cast<double>(reference_cost(us, 0.50, 1.50)), 1e-12));

        const auto cut = us.size() / 2;
        std::vector<Usage> a(us.begin(), us.begin() + static_cast<std::ptrdiff_t>(cut));
        std::vector<Usage> b(us.begin() + static_cast<std::ptrdiff_t>(cut), us.end());
        CHECK_THAT(cost(a, m) + cost(b, m), WithinAbs(total, 1e-12));

        auto shuffled = us;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(cost(shuffled, m) == total);
    }
}

TEST_CASE("list prices for the four evaluated models") {
    auto check = [](const char* name, double in, double out) {
        auto p = known_prices(name);
        REQUIRE(p);
        CHECK_THAT(p->input_price * 1e6, WithinRel(in, 1e-12));
        CHECK_THAT(p->output_price * 1e6, WithinRel(out, 1e-12));
    };
    check("gpt-3.5-turbo", 0.50, 1.50);
    check("GPT-3.5-turbo-0125", 0.50, 1.50);
    check("gpt-4o-mini-2024-07-18", 0.15, 0.60);
    check("DeepSeek-Coder-V2", 0.14, 0.28);
    check("codestral-2405", 1.00, 3.00);
    CHECK_FALSE(known_prices("gpt-4"));
    CHECK_FALSE(known_prices(""));
}

TEST_CASE("prompt hash is 64-bit FNV-1a") {
    CHECK(prompt_hash("") == "cbf29ce484222325");
    CHECK(prompt_hash("a") == "af63dc4c8601ec8c");
    CHECK(prompt_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("exchanges round-trip through JSON") {
    ChatExchange e{"p\n\"q\"", "r", Usage{3, 4}, 0.25, "mock"};
    CHECK(exchange_from_json(to_json(e)) == e);
    e.usage.reset();
    CHECK(to_json(e).at("usage").is_null());
    CHECK(exchange_from_json(to_json(e)) == e);
    CHECK_THROWS(exchange_from_json(json{{"response", "x"}}));
}

TEST_CASE("mock provider applies rules in order") {
    auto p = MockProvider::from_json(json::parse(R"({
        "rules": [
            {"prompt_hash": "85944171f73967e8", "response": "by hash", "usage": {"input_tokens": 1, "output_tokens": 2}},
            {"contains": "Error Message", "response": "by substring"}
        ],
        "default": {"response": "fallback", "usage": {"input_tokens": 5, "output_tokens": 6}}
    })"));
    auto a = p.complete("foobar");
    CHECK(a.response == "by hash");
    CHECK(a.usage == Usage{1, 2});
    auto b = p.complete("### Error Message\nx");
    CHECK(b.response == "by substring");
    CHECK_FALSE(b.usage);
    CHECK(p.complete("other").response == "fallback");

    auto strict = MockProvider::from_json(json::parse(R"({"rules": [{"contains": "x", "response": "y"}]})"));
    CHECK_THROWS_AS(strict.complete("nothing"), NoScriptedResponseError);
    CHECK_THROWS(MockProvider::from_json(json::parse(R"({"rules": [{"response": "y"}]})")));
    CHECK_THROWS_AS(MockProvider::from_file("/nonexistent/mock.json"), std::invalid_argument);
}

TEST_CASE("replay provider consumes per-prompt queues") {
    std::string text;
    text += to_json(ChatExchange{"p1", "first", Usage{1, 1}, 0, "http"}).dump() + "\n\n";
    text += to_json(ChatExchange{"p2", "other", std::nullopt, 0, "http"}).dump() + "\n";
    text += to_json(ChatExchange{"p1", "second", Usage{2, 2}, 0, "http"}).dump() + "\n";
    auto p = ReplayProvider::from_text(text);
    CHECK(p->remaining() == 3);
    CHECK(p->complete("p1").response == "first");
    CHECK(p->complete("p1").response == "second");
    CHECK_THROWS_AS(p->complete("p1"), TranscriptExhaustedError);
    CHECK_THROWS_AS(p->complete("never"), TranscriptExhaustedError);
    CHECK(p->complete("p2").response == "other");
    CHECK(p->remaining() == 0);
    CHECK_THROWS(ReplayProvider::from_text("{broken\n"));
}

TEST_CASE("recording then replaying gives the same exchanges") {
    auto mock = MockProvider::from_json(json::parse(R"({"default": {"response": "ok", "usage": {"input_tokens": 7, "output_tokens": 8}}})"));
    std::ostringstream log;
    RecordingProvider rec(mock, log);
    auto a = rec.complete("alpha");
    auto b = rec.complete("beta");
    CHECK(rec.name() == "mock");
    auto replay = ReplayProvider::from_text(log.str());
    CHECK(replay->complete("alpha") == a);
    CHECK(replay->complete("beta") == b);
}

TEST_CASE("provider config validation") {
    ProviderConfig ok;
    CHECK_NOTHROW(validate(ok));
    auto bad = ok;
    bad.endpoint = "ftp://x";
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = ok;
    bad.request_timeout_s = 0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = ok;
    bad.temperature = -0.1;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = ok;
    bad.max_output_tokens = 0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("missing API key is an auth error") {
    ::unsetenv("DSREPAIR_TEST_KEY_UNSET");
    ProviderConfig cfg;
    cfg.api_key_env = "DSREPAIR_TEST_KEY_UNSET";
    CHECK_THROWS_AS(HttpProvider(cfg), AuthError);
}

TEST_CASE("http provider parses completions and usage") {
    Fixture f;
    auto p = f.provider();
    f.server.script({StubServer::ok("```python\nx = 1\n```")});
    auto e = p.complete("fix this");
    CHECK(e.response == "```python\nx = 1\n```");
    CHECK(e.usage == Usage{12, 5});
    CHECK(e.provider == "http:gpt-3.5-turbo");
    CHECK(f.server.last_auth() == std::string("Bearer ") + kKey);

    auto sent = json::parse(f.server.last_body());
    CHECK(sent == p.request_body("fix this"));
    CHECK(sent.at("model") == "gpt-3.5-turbo");
    CHECK(sent.at("temperature") == 0.0);
    CHECK(sent.at("messages").at(0).at("content") == "fix this");

    f.server.script({StubServer::ok("no usage", false)});
    CHECK_FALSE(p.complete("again").usage);
    CHECK_THROWS_AS(p.complete(""), std::invalid_argument);
}

TEST_CASE("http provider retries transient failures with backoff") {
    Fixture f;
    auto p = f.provider(3);
    f.server.script({{500, "oops", ""}, {429, "slow down", "4"}, StubServer::ok("done")});
    CHECK(p.complete("x").response == "done");
    CHECK(f.server.requests() == 3);
    // 0.5 * 2^0, then max(0.5 * 2^1, Retry-After 4).
    CHECK(f.sleeps == std::vector<double>{0.5, 4.0});
}

TEST_CASE("http provider gives up after the retry budget") {
    Fixture f;
    auto p = f.provider(1);
    f.server.script({{503, "a", ""}, {503, "b", ""}, StubServer::ok("late")});
    CHECK_THROWS_AS(p.complete("x"), TransportError);
    CHECK(f.server.requests() == 2);
}

TEST_CASE("http provider does not retry permanent failures") {
    Fixture f;
    auto p = f.provider(3);
    f.server.script({{401, "bad key", ""}});
    CHECK_THROWS_AS(p.complete("x"), AuthError);
    f.server.script({{400, "bad request", ""}});
    try {
        p.complete("x");
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK_FALSE(e.retryable());
    }
    f.server.script({{200, "{\"choices\": []}", ""}});
    CHECK_THROWS_AS(p.complete("x"), MalformedResponseError);
    f.server.script({{200, "not json", ""}});
    CHECK_THROWS_AS(p.complete("x"), MalformedResponseError);
    CHECK(f.server.requests() == 4);
    CHECK(f.sleeps.empty());
}

TEST_CASE("http errors never carry the API key") {
    Fixture f;
    auto p = f.provider(0);
    f.server.script({{500, std::string("echo: Bearer ") + kKey, ""}});
    try {
        p.complete("x");
        FAIL("expected TransportError");
    } catch (const LlmError& e) {
        const std::string what = e.what();
        CHECK(what.find(kKey) == std::string::npos);
        CHECK(what.find("***") != std::string::npos);
    }
    CHECK(scrub_secret("a key b key", "key") == "a *** b ***");
    CHECK(scrub_secret("abc", "") == "abc");
}

TEST_CASE("unreachable endpoint is a retryable transport failure") {
    ::setenv(kKeyVar, kKey, 1);
    ProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    cfg.api_key_env = kKeyVar;
    cfg.retries = 2;
    cfg.request_timeout_s = 1;
    std::vector<double> sleeps;
    HttpProvider p(cfg, [&](double s) { sleeps.push_back(s); });
    try {
        p.complete("x");
        FAIL("expected an LlmError");
    } catch (const LlmError& e) {
        CHECK(e.retryable());
    }
    CHECK(sleeps.size() == 2);
}
