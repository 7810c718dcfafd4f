// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace dsrepair::llm {

using nlohmann::json;

std::optional<CostModel> known_prices(std::string_view model) {
    std::string m(model);
    std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return std::tolower(c); });
    if (m.starts_with("gpt-3.5-turbo")) return CostModel::per_million(0.50, 1.50);
    if (m.starts_with("gpt-4o-mini")) return CostModel::per_million(0.15, 0.60);
    if (m.starts_with("deepseek-coder")) return CostModel::per_million(0.14, 0.28);
    if (m.starts_with("codestral")) return CostModel::per_million(1.00, 3.00);
    return std::nullopt;
}

double cost(std::span<const Usage> usages, const CostModel& m) {
    // Integer token sums keep the result independent of summation order.
    std::uint64_t in = 0;
    std::uint64_t out = 0;
    for (const auto& u : usages) {
        in += u.input_tokens;
        out += u.output_tokens;
    }
    return static_cast<double>(in) * m.input_price + static_cast<double>(out) * m.output_price;
}

namespace {

json usage_json(const std::optional<Usage>& u) {
    if (!u) return nullptr;
    return json{{"input_tokens", u->input_tokens}, {"output_tokens", u->output_tokens}};
}

std::optional<Usage> usage_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    Usage u;
    u.input_tokens = j.at("input_tokens").get<std::uint64_t>();
    u.output_tokens = j.at("output_tokens").get<std::uint64_t>();
    return u;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

json to_json(const ChatExchange& e) {
    return json{{"prompt", e.prompt},
                {"response", e.response},
                {"usage", usage_json(e.usage)},
                {"latency_s", e.latency_s},
                {"provider", e.provider}};
}

ChatExchange exchange_from_json(const json& j) {
    ChatExchange e;
    e.prompt = j.at("prompt").get<std::string>();
    e.response = j.at("response").get<std::string>();
    e.usage = usage_from(j.value("usage", json(nullptr)));
    e.latency_s = j.value("latency_s", 0.0);
    e.provider = j.value("provider", std::string());
    return e;
}

std::string prompt_hash(std::string_view prompt) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : prompt) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string scrub_secret(std::string text, std::string_view secret) {
    if (secret.empty()) return text;
    std::size_t pos = 0;
    while ((pos = text.find(secret, pos)) != std::string::npos) {
        text.replace(pos, secret.size(), "***");
        pos += 3;
    }
    return text;
}

// ---------------------------------------------------------------------------
// Mock

MockProvider MockProvider::from_json(const json& j) {
    auto rule_from = [](const json& r) {
        Rule rule;
        if (r.contains("prompt_hash")) rule.hash = r.at("prompt_hash").get<std::string>();
        if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
        rule.response = r.at("response").get<std::string>();
        if (r.contains("usage")) rule.usage = usage_from(r.at("usage"));
        return rule;
    };
    MockProvider p;
    for (const auto& r : j.value("rules", json::array())) {
        Rule rule = rule_from(r);
        if (!rule.hash && !rule.contains) throw std::invalid_argument("mock rule needs prompt_hash or contains");
        p.rules_.push_back(std::move(rule));
    }
    if (j.contains("default")) p.default_ = rule_from(j.at("default"));
    return p;
}

MockProvider MockProvider::from_file(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw std::invalid_argument("mock rules " + path.string() + ": " + e.what());
    }
}

ChatExchange MockProvider::complete(const std::string& prompt) {
    const std::string hash = prompt_hash(prompt);
    const Rule* hit = nullptr;
    for (const auto& r : rules_) {
        if ((r.hash && *r.hash == hash) || (r.contains && prompt.find(*r.contains) != std::string::npos)) {
            hit = &r;
            break;
        }
    }
    if (!hit && default_) hit = &*default_;
    if (!hit) throw NoScriptedResponseError("no mock rule matches prompt " + hash);
    return ChatExchange{prompt, hit->response, hit->usage, 0.0, name()};
}

// ---------------------------------------------------------------------------
// Replay

std::unique_ptr<ReplayProvider> ReplayProvider::from_text(std::string_view text) {
    auto p = std::make_unique<ReplayProvider>();
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto e = exchange_from_json(json::parse(line));
            p->queues_[e.prompt].push_back(std::move(e));
        } catch (const json::exception& e) {
            throw std::invalid_argument("transcript line " + std::to_string(number) + ": " + e.what());
        }
    }
    return p;
}

std::unique_ptr<ReplayProvider> ReplayProvider::from_file(const std::filesystem::path& path) {
    return from_text(read_file(path));
}

ChatExchange ReplayProvider::complete(const std::string& prompt) {
    std::lock_guard lock(mu_);
    auto it = queues_.find(prompt);
    if (it == queues_.end() || it->second.empty()) {
        throw TranscriptExhaustedError("transcript has no exchange left for prompt " + prompt_hash(prompt));
    }
    ChatExchange e = std::move(it->second.front());
    it->second.pop_front();
    return e;
}

std::size_t ReplayProvider::remaining() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [_, q] : queues_) n += q.size();
    return n;
}

// ---------------------------------------------------------------------------
// HTTP

void validate(const ProviderConfig& cfg) {
    static const std::regex url(R"(^https?://[^/\s]+(/\S*)?$)");
    if (!std::regex_match(cfg.endpoint, url)) throw std::invalid_argument("endpoint must be an http(s) URL");
    if (cfg.model_name.empty()) throw std::invalid_argument("model name is empty");
    if (cfg.api_key_env.empty()) throw std::invalid_argument("api key variable name is empty");
    if (!(cfg.temperature >= 0.0)) throw std::invalid_argument("temperature must be non-negative");
    if (!(cfg.request_timeout_s > 0.0)) throw std::invalid_argument("request timeout must be positive");
    if (cfg.max_output_tokens == 0) throw std::invalid_argument("max output tokens must be positive");
    if (!(cfg.requests_per_minute >= 0.0)) throw std::invalid_argument("requests per minute must be non-negative");
    if (!(cfg.backoff_initial_s >= 0.0)) throw std::invalid_argument("backoff must be non-negative");
}

HttpProvider::HttpProvider(ProviderConfig cfg, Sleeper sleeper) : cfg_(std::move(cfg)), sleep_(std::move(sleeper)) {
    validate(cfg_);
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw AuthError("environment variable " + cfg_.api_key_env + " is not set");
    api_key_ = key;

    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    std::regex_match(cfg_.endpoint, m, url);
    scheme_host_port_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (!sleep_) {
        sleep_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    }
}

json HttpProvider::request_body(const std::string& prompt) const {
    return json{{"model", cfg_.model_name},
                {"temperature", cfg_.temperature},
                {"max_tokens", cfg_.max_output_tokens},
                {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}};
}

std::string HttpProvider::scrub(std::string text) const { return scrub_secret(std::move(text), api_key_); }

void HttpProvider::wait_for_slot() {
    if (cfg_.requests_per_minute <= 0.0) return;
    using clock = std::chrono::steady_clock;
    const auto interval = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(60.0 / cfg_.requests_per_minute));
    clock::time_point slot;
    {
        std::lock_guard lock(bucket_mu_);
        const auto now = clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval;
    }
    const auto wait = std::chrono::duration<double>(slot - clock::now()).count();
    if (wait > 0) sleep_(wait);
}

ChatExchange HttpProvider::attempt(const std::string& prompt) {
    httplib::Client cli(scheme_host_port_);
    const auto secs = static_cast<time_t>(cfg_.request_timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.request_timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(path_, headers, request_body(prompt).dump(), "application/json");
    const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!res) {
        const auto err = res.error();
        const std::string what = scrub("request failed: " + httplib::to_string(err));
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) throw TimeoutError(what);
        throw TransportError(what, true);
    }
    const int status = res->status;
    const std::string snippet = scrub(res->body.substr(0, 200));
    if (status == 401 || status == 403) throw AuthError("provider rejected credentials (HTTP " + std::to_string(status) + ")");
    if (status == 429) {
        std::optional<double> after;
        if (res->has_header("Retry-After")) {
            try {
                after = std::stod(res->get_header_value("Retry-After"));
            } catch (...) {
            }
        }
        throw RateLimitError("rate limited (HTTP 429): " + snippet, after);
    }
    if (status == 408) throw TimeoutError("provider timed out (HTTP 408)");
    if (status >= 500) throw TransportError("provider error (HTTP " + std::to_string(status) + "): " + snippet, true);
    if (status < 200 || status >= 300) {
        throw TransportError("unexpected HTTP " + std::to_string(status) + ": " + snippet, false);
    }

    ChatExchange e;
    e.prompt = prompt;
    e.latency_s = latency;
    e.provider = name();
    try {
        const json body = json::parse(res->body);
        e.response = body.at("choices").at(0).at("message").at("content").get<std::string>();
        if (auto u = body.find("usage"); u != body.end() && u->is_object() && u->contains("prompt_tokens") &&
                                         u->contains("completion_tokens")) {
            e.usage = Usage{u->at("prompt_tokens").get<std::uint64_t>(), u->at("completion_tokens").get<std::uint64_t>()};
        }
    } catch (const json::exception& ex) {
        throw MalformedResponseError(scrub(std::string("malformed provider response: ") + ex.what()));
    }
    return e;
}

ChatExchange HttpProvider::complete(const std::string& prompt) {
    if (prompt.empty()) throw std::invalid_argument("prompt is empty");
    for (std::uint32_t attempt_no = 0;; ++attempt_no) {
        wait_for_slot();
        try {
            return attempt(prompt);
        } catch (const LlmError& e) {
            if (!e.retryable() || attempt_no >= cfg_.retries) throw;
            double delay = cfg_.backoff_initial_s * std::pow(2.0, attempt_no);
            if (const auto* rl = dynamic_cast<const RateLimitError*>(&e); rl && rl->retry_after_s()) {
                delay = std::max(delay, *rl->retry_after_s());
            }
            sleep_(delay);
        }
    }
}

// ---------------------------------------------------------------------------

ChatExchange RecordingProvider::complete(const std::string& prompt) {
    ChatExchange e = inner_.complete(prompt);
    std::lock_guard lock(mu_);
    out_ << to_json(e).dump() << '\n';
    out_.flush();
    return e;
}

}  // namespace dsrepair::llm
