// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Client side of the sandbox runner's stdio protocol: one JSON object per
// line in each direction. The runner itself lives outside this library;
// ProcessRunner talks to a child process, ReplayRunner answers from a
// recorded transcript.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dsrepair::runner {

enum class RunMode { run_tests, localize };
enum class RunStatus { ok, error, timeout };
enum class FailureKind { none, runtime, assertion };

std::string_view to_string(RunMode m) noexcept;
std::string_view to_string(RunStatus s) noexcept;
std::string_view to_string(FailureKind k) noexcept;

inline constexpr double kMaxTimeoutSeconds = 60.0;

struct RunRequest {
    std::string id;
    RunMode mode = RunMode::run_tests;
    std::string code;
    std::string tests;
    std::string imports;
    double timeout_s = 10.0;

    friend bool operator==(const RunRequest&, const RunRequest&) = default;
};

struct RunResponse {
    std::string id;
    RunStatus status = RunStatus::ok;
    bool passed = false;
    FailureKind kind = FailureKind::none;
    std::optional<std::int64_t> last_executed_index;
    std::optional<std::int64_t> first_failed_index;
    std::string failed_source;
    std::string captured_value_repr;
    std::string stderr_text;  // "stderr" on the wire
    std::string message;      // set by the runner on status=error

    friend bool operator==(const RunResponse&, const RunResponse&) = default;
};

class RequestError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The runner could not produce a response: it died, hung, or wrote garbage.
class RunnerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws RequestError: timeout_s outside (0, 60], or empty code in localize mode.
void validate(const RunRequest& r);

nlohmann::json to_json(const RunRequest& r);
nlohmann::json to_json(const RunResponse& r);
RunRequest request_from_json(const nlohmann::json& j);
/// Unknown fields are ignored; missing optional fields take their defaults.
RunResponse response_from_json(const nlohmann::json& j);

/// Replay key: the request with `id` and `timeout_s` stripped, serialized.
std::string replay_key(const RunRequest& r);

class Runner {
public:
    virtual ~Runner() = default;
    /// Validates `r`, then returns the runner's answer. Throws RunnerError.
    virtual RunResponse run(const RunRequest& r) = 0;
};

struct ProcessOptions {
    std::vector<std::string> argv;  // argv[0] resolved through PATH
    /// Extra wall-clock allowance on top of the request's timeout_s before the
    /// child is declared hung and killed.
    double grace_s = 5.0;
};

/// One long-lived child per instance, restarted on the next request after it
/// dies. Requests on one instance are serialized.
class ProcessRunner final : public Runner {
public:
    explicit ProcessRunner(ProcessOptions options);
    ~ProcessRunner() override;
    ProcessRunner(const ProcessRunner&) = delete;
    ProcessRunner& operator=(const ProcessRunner&) = delete;

    RunResponse run(const RunRequest& r) override;

    /// Child's stderr output seen so far (last few KiB).
    std::string child_stderr() const;

private:
    void start();
    void stop();

    ProcessOptions options_;
    mutable std::mutex mu_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    int err_child_ = -1;
    std::string pending_;  // bytes read past the last newline
    std::string stderr_tail_;
    std::uint64_t next_id_ = 1;
};

/// Answers from a transcript of `{"request": ..., "response": ...}` lines.
/// Requests are matched by replay_key(); the response id is rewritten to the
/// caller's id.
class ReplayRunner final : public Runner {
public:
    static ReplayRunner from_file(const std::filesystem::path& path);
    static ReplayRunner from_text(std::string_view text);

    RunResponse run(const RunRequest& r) override;
    std::size_t size() const noexcept { return responses_.size(); }

private:
    std::map<std::string, RunResponse> responses_;
};

/// Forwards to `inner` and appends each exchange to `out` as a transcript line.
class RecordingRunner final : public Runner {
public:
    RecordingRunner(Runner& inner, std::ostream& out) : inner_(inner), out_(out) {}
    RunResponse run(const RunRequest& r) override;

private:
    Runner& inner_;
    std::ostream& out_;
    std::mutex mu_;
};

/// Splits a command line on whitespace, honouring quotes and backslash escapes.
std::vector<std::string> split_command(std::string_view command);

}  // namespace dsrepair::runner
