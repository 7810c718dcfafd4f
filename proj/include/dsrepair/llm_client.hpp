// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Chat-completion providers and token cost accounting.

#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dsrepair::llm {

struct Usage {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;

    friend bool operator==(const Usage&, const Usage&) = default;
};

/// Prices in USD per token.
struct CostModel {
    double input_price = 0.0;
    double output_price = 0.0;

    static CostModel per_million(double input_usd, double output_usd) {
        return {input_usd / 1e6, output_usd / 1e6};
    }
};

/// List prices for the models the evaluation was designed around. Names are
/// matched case-insensitively: gpt-3.5-turbo, gpt-4o-mini, deepseek-coder,
/// codestral.
std::optional<CostModel> known_prices(std::string_view model);

/// Sum over requests of input_tokens * input_price + output_tokens * output_price.
double cost(std::span<const Usage> usages, const CostModel& m);

struct ChatExchange {
    std::string prompt;
    std::string response;
    std::optional<Usage> usage;  // nullopt: provider reported none
    double latency_s = 0.0;
    std::string provider;

    friend bool operator==(const ChatExchange&, const ChatExchange&) = default;
};

nlohmann::json to_json(const ChatExchange& e);
ChatExchange exchange_from_json(const nlohmann::json& j);

/// FNV-1a 64-bit of the prompt bytes, 16 lowercase hex digits.
std::string prompt_hash(std::string_view prompt);

class LlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual bool retryable() const noexcept { return false; }
};
class AuthError : public LlmError {
public:
    using LlmError::LlmError;
};
class RateLimitError : public LlmError {
public:
    RateLimitError(const std::string& what, std::optional<double> retry_after_s = std::nullopt)
        : LlmError(what), retry_after_s_(retry_after_s) {}
    bool retryable() const noexcept override { return true; }
    std::optional<double> retry_after_s() const noexcept { return retry_after_s_; }

private:
    std::optional<double> retry_after_s_;
};
class TimeoutError : public LlmError {
public:
    using LlmError::LlmError;
    bool retryable() const noexcept override { return true; }
};
class MalformedResponseError : public LlmError {
public:
    using LlmError::LlmError;
};
/// Connection failures and 5xx answers.
class TransportError : public LlmError {
public:
    TransportError(const std::string& what, bool retryable) : LlmError(what), retryable_(retryable) {}
    bool retryable() const noexcept override { return retryable_; }

private:
    bool retryable_;
};
class TranscriptExhaustedError : public LlmError {
public:
    using LlmError::LlmError;
};
class NoScriptedResponseError : public LlmError {
public:
    using LlmError::LlmError;
};

class Provider {
public:
    virtual ~Provider() = default;
    /// Throws LlmError subclasses. Implementations are safe to share between threads.
    virtual ChatExchange complete(const std::string& prompt) = 0;
    virtual std::string name() const = 0;
};

/// Canned answers. Rule file:
///   {"rules": [{"prompt_hash": "...", "response": "...", "usage": {"input_tokens": n, "output_tokens": m}},
///              {"contains": "...", "response": "..."}],
///    "default": {"response": "...", "usage": {...}}}
/// Rules are tried in order; a rule without usage yields a usage-unknown exchange.
class MockProvider final : public Provider {
public:
    static MockProvider from_json(const nlohmann::json& j);
    static MockProvider from_file(const std::filesystem::path& path);

    ChatExchange complete(const std::string& prompt) override;
    std::string name() const override { return "mock"; }

private:
    struct Rule {
        std::optional<std::string> hash;
        std::optional<std::string> contains;
        std::string response;
        std::optional<Usage> usage;
    };
    std::vector<Rule> rules_;
    std::optional<Rule> default_;
};

/// Replays recorded exchanges. Each prompt has its own queue, consumed in
/// transcript order; a prompt with nothing left raises TranscriptExhaustedError.
class ReplayProvider final : public Provider {
public:
    static std::unique_ptr<ReplayProvider> from_text(std::string_view text);
    static std::unique_ptr<ReplayProvider> from_file(const std::filesystem::path& path);

    ChatExchange complete(const std::string& prompt) override;
    std::string name() const override { return "replay"; }
    std::size_t remaining() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::deque<ChatExchange>> queues_;
};

struct ProviderConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model_name = "gpt-3.5-turbo";
    std::string api_key_env = "DSREPAIR_API_KEY";
    double temperature = 0.0;
    std::uint32_t max_output_tokens = 1024;
    double request_timeout_s = 60.0;
    std::uint32_t retries = 3;
    double backoff_initial_s = 1.0;
    double requests_per_minute = 0.0;  // 0: unlimited
};

/// Throws std::invalid_argument on a bad endpoint, negative timeout, etc.
void validate(const ProviderConfig& cfg);

/// Chat-completions JSON over HTTP(S).
class HttpProvider final : public Provider {
public:
    using Sleeper = std::function<void(double seconds)>;

    /// Reads the key from `cfg.api_key_env`; throws AuthError when it is unset.
    explicit HttpProvider(ProviderConfig cfg, Sleeper sleeper = {});

    ChatExchange complete(const std::string& prompt) override;
    std::string name() const override { return "http:" + cfg_.model_name; }

    /// Request body sent for `prompt`.
    nlohmann::json request_body(const std::string& prompt) const;

private:
    ChatExchange attempt(const std::string& prompt);
    void wait_for_slot();
    std::string scrub(std::string text) const;

    ProviderConfig cfg_;
    std::string api_key_;
    std::string scheme_host_port_;
    std::string path_;
    Sleeper sleep_;
    std::mutex bucket_mu_;
    std::chrono::steady_clock::time_point next_slot_{};
};

/// Forwards to `inner` and appends every successful exchange to `out`.
class RecordingProvider final : public Provider {
public:
    RecordingProvider(Provider& inner, std::ostream& out) : inner_(inner), out_(out) {}
    ChatExchange complete(const std::string& prompt) override;
    std::string name() const override { return inner_.name(); }

private:
    Provider& inner_;
    std::ostream& out_;
    std::mutex mu_;
};

/// Removes every occurrence of `secret` from `text`.
std::string scrub_secret(std::string text, std::string_view secret);

}  // namespace dsrepair::llm
