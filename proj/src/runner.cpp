// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/runner.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace dsrepair::runner {

using nlohmann::json;

std::string_view to_string(RunMode m) noexcept {
    return m == RunMode::localize ? "localize" : "run_tests";
}

std::string_view to_string(RunStatus s) noexcept {
    switch (s) {
        case RunStatus::ok: return "ok";
        case RunStatus::error: return "error";
        case RunStatus::timeout: return "timeout";
    }
    return "error";
}

std::string_view to_string(FailureKind k) noexcept {
    switch (k) {
        case FailureKind::none: return "none";
        case FailureKind::runtime: return "runtime";
        case FailureKind::assertion: return "assertion";
    }
    return "none";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const json& j, const char* field, const E (&values)[N]) {
    if (!j.is_string()) throw std::invalid_argument(std::string(field) + " must be a string");
    const auto s = j.get<std::string>();
    for (E v : values) {
        if (to_string(v) == s) return v;
    }
    throw std::invalid_argument(std::string("unknown ") + field + " '" + s + "'");
}

constexpr RunMode kModes[] = {RunMode::run_tests, RunMode::localize};
constexpr RunStatus kStatuses[] = {RunStatus::ok, RunStatus::error, RunStatus::timeout};
constexpr FailureKind kKinds[] = {FailureKind::none, FailureKind::runtime, FailureKind::assertion};

std::string string_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) throw std::invalid_argument(std::string(key) + " must be a string");
    return it->get<std::string>();
}

std::optional<std::int64_t> index_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number_integer()) throw std::invalid_argument(std::string(key) + " must be an integer");
    return it->get<std::int64_t>();
}

}  // namespace

void validate(const RunRequest& r) {
    if (!(r.timeout_s > 0.0) || r.timeout_s > kMaxTimeoutSeconds) {
        throw RequestError("timeout_s must be in (0, 60], got " + std::to_string(r.timeout_s));
    }
    if (r.mode == RunMode::localize && r.code.empty()) {
        throw RequestError("localize requires non-empty code");
    }
}

json to_json(const RunRequest& r) {
    return json{{"id", r.id},           {"mode", to_string(r.mode)}, {"code", r.code},
                {"tests", r.tests},     {"imports", r.imports},      {"timeout_s", r.timeout_s}};
}

json to_json(const RunResponse& r) {
    json j{{"id", r.id},
           {"status", to_string(r.status)},
           {"passed", r.passed},
           {"kind", to_string(r.kind)},
           {"failed_source", r.failed_source},
           {"captured_value_repr", r.captured_value_repr},
           {"stderr", r.stderr_text}};
    if (r.last_executed_index) j["last_executed_index"] = *r.last_executed_index;
    if (r.first_failed_index) j["first_failed_index"] = *r.first_failed_index;
    if (!r.message.empty()) j["message"] = r.message;
    return j;
}

RunRequest request_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("request must be a JSON object");
    RunRequest r;
    r.id = string_field(j, "id");
    if (!j.contains("mode")) throw std::invalid_argument("missing mode");
    r.mode = parse_enum(j.at("mode"), "mode", kModes);
    r.code = string_field(j, "code");
    r.tests = string_field(j, "tests");
    r.imports = string_field(j, "imports");
    if (auto it = j.find("timeout_s"); it != j.end()) {
        if (!it->is_number()) throw std::invalid_argument("timeout_s must be a number");
        r.timeout_s = it->get<double>();
    }
    return r;
}

RunResponse response_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("response must be a JSON object");
    RunResponse r;
    r.id = string_field(j, "id");
    if (!j.contains("status")) throw std::invalid_argument("missing status");
    r.status = parse_enum(j.at("status"), "status", kStatuses);
    if (auto it = j.find("passed"); it != j.end()) {
        if (!it->is_boolean()) throw std::invalid_argument("passed must be a boolean");
        r.passed = it->get<bool>();
    }
    if (auto it = j.find("kind"); it != j.end() && !it->is_null()) {
        r.kind = parse_enum(*it, "kind", kKinds);
    }
    r.last_executed_index = index_field(j, "last_executed_index");
    r.first_failed_index = index_field(j, "first_failed_index");
    r.failed_source = string_field(j, "failed_source");
    r.captured_value_repr = string_field(j, "captured_value_repr");
    r.stderr_text = string_field(j, "stderr");
    r.message = string_field(j, "message");
    return r;
}

std::string replay_key(const RunRequest& r) {
    // json objects serialize with sorted keys.
    return json{{"mode", to_string(r.mode)}, {"code", r.code}, {"tests", r.tests}, {"imports", r.imports}}
        .dump();
}

// ---------------------------------------------------------------------------
// ProcessRunner

namespace {

void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

constexpr std::size_t kStderrTail = 8192;

}  // namespace

ProcessRunner::ProcessRunner(ProcessOptions options) : options_(std::move(options)) {
    if (options_.argv.empty()) throw std::invalid_argument("runner command is empty");
    ignore_sigpipe_once();
}

ProcessRunner::~ProcessRunner() {
    std::lock_guard lock(mu_);
    stop();
}

std::string ProcessRunner::child_stderr() const {
    std::lock_guard lock(mu_);
    return stderr_tail_;
}

void ProcessRunner::start() {
    int in_pipe[2];
    int out_pipe[2];
    int err_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw RunnerError(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw RunnerError(std::string("pipe: ") + std::strerror(errno));
    }
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        throw RunnerError(std::string("pipe: ") + std::strerror(errno));
    }

    std::vector<char*> argv;
    for (auto& a : options_.argv) argv.push_back(a.data());
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
        throw RunnerError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::signal(SIGPIPE, SIG_DFL);
        ::execvp(argv[0], argv.data());
        const char msg[] = "dsrepair: exec failed\n";
        [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg, sizeof msg - 1);
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    err_child_ = err_pipe[0];
    ::fcntl(err_child_, F_SETFL, ::fcntl(err_child_, F_GETFL) | O_NONBLOCK);
    pending_.clear();
}

void ProcessRunner::stop() {
    if (pid_ < 0) return;
    close_fd(to_child_);  // EOF lets a well-behaved child exit on its own
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 20 && !reaped; ++i) {
        reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
        if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!reaped) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
    }
    close_fd(from_child_);
    close_fd(err_child_);
    pid_ = -1;
    pending_.clear();
}

RunResponse ProcessRunner::run(const RunRequest& request) {
    validate(request);
    std::lock_guard lock(mu_);
    if (pid_ < 0) start();

    RunRequest r = request;
    if (r.id.empty()) r.id = "req-" + std::to_string(next_id_++);

    std::string line = to_json(r).dump() + "\n";
    std::string_view rest = line;
    while (!rest.empty()) {
        const ssize_t n = ::write(to_child_, rest.data(), rest.size());
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            const std::string why = std::strerror(errno);
            stop();
            throw RunnerError("cannot write to runner: " + why);
        }
        rest.remove_prefix(static_cast<std::size_t>(n));
    }

    using clock = std::chrono::steady_clock;
    const auto deadline =
        clock::now() + std::chrono::duration_cast<clock::duration>(
                           std::chrono::duration<double>(r.timeout_s + options_.grace_s));

    auto drain_stderr = [&] {
        char buf[4096];
        for (;;) {
            const ssize_t n = ::read(err_child_, buf, sizeof buf);
            if (n <= 0) return n == 0;
            stderr_tail_.append(buf, static_cast<std::size_t>(n));
            if (stderr_tail_.size() > kStderrTail) stderr_tail_.erase(0, stderr_tail_.size() - kStderrTail);
        }
    };

    std::size_t nl;
    while ((nl = pending_.find('\n')) == std::string::npos) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
        if (left.count() <= 0) {
            stop();
            throw RunnerError("runner did not answer within " + std::to_string(r.timeout_s + options_.grace_s) +
                              " s");
        }
        pollfd fds[2] = {{from_child_, POLLIN, 0}, {err_child_, POLLIN, 0}};
        const int ready = ::poll(fds, err_child_ >= 0 ? 2 : 1, static_cast<int>(left.count()));
        if (ready < 0 && errno == EINTR) continue;
        if (ready < 0) {
            stop();
            throw RunnerError(std::string("poll: ") + std::strerror(errno));
        }
        if (err_child_ >= 0 && (fds[1].revents & (POLLIN | POLLHUP)) && drain_stderr()) close_fd(err_child_);
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            char buf[65536];
            const ssize_t n = ::read(from_child_, buf, sizeof buf);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) {
                if (err_child_ >= 0) drain_stderr();
                const std::string tail = stderr_tail_;
                stop();
                throw RunnerError("runner exited before answering" + (tail.empty() ? "" : ": " + tail));
            }
            pending_.append(buf, static_cast<std::size_t>(n));
        }
    }

    const std::string reply = pending_.substr(0, nl);
    pending_.erase(0, nl + 1);

    RunResponse response;
    try {
        response = response_from_json(json::parse(reply));
    } catch (const std::exception& e) {
        stop();
        throw RunnerError(std::string("malformed runner response: ") + e.what());
    }
    if (response.id != r.id) {
        stop();
        throw RunnerError("runner answered id '" + response.id + "' to request '" + r.id + "'");
    }
    if (request.id.empty()) response.id.clear();
    return response;
}

// ---------------------------------------------------------------------------
// Replay / recording

ReplayRunner ReplayRunner::from_text(std::string_view text) {
    ReplayRunner out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            const RunRequest req = request_from_json(j.at("request"));
            const RunResponse resp = response_from_json(j.at("response"));
            auto [it, inserted] = out.responses_.emplace(replay_key(req), resp);
            if (!inserted) {
                RunResponse a = it->second;
                RunResponse b = resp;
                a.id.clear();
                b.id.clear();
                if (!(a == b)) throw std::invalid_argument("conflicting responses for the same request");
            }
        } catch (const std::exception& e) {
            throw RunnerError("transcript line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

ReplayRunner ReplayRunner::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RunnerError("cannot open transcript " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

RunResponse ReplayRunner::run(const RunRequest& r) {
    validate(r);
    auto it = responses_.find(replay_key(r));
    if (it == responses_.end()) {
        throw RunnerError("no recorded response for " + std::string(to_string(r.mode)) + " request");
    }
    RunResponse out = it->second;
    out.id = r.id;
    return out;
}

RunResponse RecordingRunner::run(const RunRequest& r) {
    RunResponse resp = inner_.run(r);
    json line{{"request", to_json(r)}, {"response", to_json(resp)}};
    std::lock_guard lock(mu_);
    out_ << line.dump() << '\n';
    out_.flush();
    return resp;
}

std::vector<std::string> split_command(std::string_view command) {
    std::vector<std::string> out;
    std::string cur;
    bool have = false;
    char quote = 0;
    bool escaped = false;
    for (char c : command) {
        if (escaped) {
            cur.push_back(c);
            escaped = false;
        } else if (c == '\\' && quote != '\'') {
            escaped = true;
            have = true;
        } else if (quote) {
            if (c == quote) quote = 0;
            else cur.push_back(c);
        } else if (c == '\'' || c == '"') {
            quote = c;
            have = true;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            if (have) out.push_back(std::move(cur));
            cur.clear();
            have = false;
        } else {
            cur.push_back(c);
            have = true;
        }
    }
    if (quote) throw std::invalid_argument("unterminated quote in command");
    if (escaped) throw std::invalid_argument("trailing backslash in command");
    if (have) out.push_back(std::move(cur));
    return out;
}

}  // namespace dsrepair::runner
