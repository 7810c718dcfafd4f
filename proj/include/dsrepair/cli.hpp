// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Command-line front end. Settings resolve as: flag, then environment
// variable DSREPAIR_<FLAG_NAME> (upper case, '-' -> '_'), then the
// `key = value` config file named by --config or DSREPAIR_CONFIG.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dsrepair::cli {

enum ExitCode : int {
    kSuccess = 0,
    kTestsFailed = 1,
    kConfigError = 2,
    kProviderError = 3,
    kRunnerError = 4,
};

struct Environment {
    std::function<std::optional<std::string>(const std::string&)> get;

    static Environment process();
    static Environment from_map(std::map<std::string, std::string> vars);
};

/// Parses a `key = value` config file; '#' starts a comment line.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Environment& env = Environment::process());

}  // namespace dsrepair::cli
