// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Repair prompt assembly. Templates are plain text made of `### Header`
// sections with `{{slot}}` placeholders; the defaults in templates/ are
// compiled in and can be overridden from a directory at run time.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dsrepair/api_retrieval.hpp"
#include "dsrepair/bug_enrichment.hpp"

namespace dsrepair::prompt {

enum class PromptMode {
    dsrepair,
    dsrepair_wo_api,
    dsrepair_wo_bug,
    dsrepair_wo_api_bug,
    self_debugging_s,
    self_debugging_e,
    chat_repair,
    self_repair,
};

inline constexpr PromptMode kAllPromptModes[] = {
    PromptMode::dsrepair,         PromptMode::dsrepair_wo_api,  PromptMode::dsrepair_wo_bug,
    PromptMode::dsrepair_wo_api_bug, PromptMode::self_debugging_s, PromptMode::self_debugging_e,
    PromptMode::chat_repair,      PromptMode::self_repair};

std::string_view to_string(PromptMode m) noexcept;
std::optional<PromptMode> mode_from_string(std::string_view name) noexcept;

bool uses_api_knowledge(PromptMode m) noexcept;
bool uses_bug_knowledge(PromptMode m) noexcept;
/// Modes that first ask the model to explain the failure.
bool is_two_stage(PromptMode m) noexcept;

namespace header {
inline constexpr std::string_view problem = "Problem Description";
inline constexpr std::string_view code = "Incorrect Code";
inline constexpr std::string_view error = "Error Message";
inline constexpr std::string_view api = "API Knowledge";
inline constexpr std::string_view bug = "Bug Knowledge";
inline constexpr std::string_view fact_check = "Fact Checking";
inline constexpr std::string_view format = "Response Format";
inline constexpr std::string_view explanation = "Explanation";
}  // namespace header

struct Section {
    std::string header;
    std::string body;

    friend bool operator==(const Section&, const Section&) = default;
};

struct RepairPrompt {
    std::vector<Section> sections;
    PromptMode mode = PromptMode::dsrepair;
    retrieval::RichnessLevel richness = retrieval::RichnessLevel::expression_only;
    std::string rendered;
};

class PromptError : public std::runtime_error {
public:
    PromptError(std::string section, const std::string& message)
        : std::runtime_error(section.empty() ? message : "section '" + section + "': " + message),
          section_(std::move(section)) {}
    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

/// Drops warning lines (and their indented continuations), collapses runs of
/// library traceback frames, and replaces absolute paths by their last
/// component.
std::string clean_stderr(std::string_view raw);

/// True when `text` contains a POSIX or drive-rooted absolute path.
bool contains_absolute_path(std::string_view text);

/// Deterministic text of the Bug Knowledge section.
std::string render_bug_knowledge(const bug::BugReport& report, const bug::TestSpec& tests);

struct PromptInputs {
    std::string description;
    std::string buggy_code;
    std::string stderr_raw;                            // cleaned during rendering
    std::optional<retrieval::ApiKnowledge> api;        // required by modes using API knowledge
    std::optional<bug::BugReport> bug;                 // required by modes using bug knowledge
    bug::TestSpec tests;
    std::string explanation;                           // second stage of two-stage modes
};

class TemplateSet {
public:
    /// Known template names: dsrepair, explanation_request, self_debugging_s,
    /// self_debugging_e, chat_repair, self_repair.
    static const std::vector<std::string>& names();

    static TemplateSet embedded();
    /// Files `<name>.tmpl` found in `dir` replace the embedded defaults.
    static TemplateSet load(const std::filesystem::path& dir);

    const std::string& text(const std::string& name) const;

private:
    std::map<std::string, std::string> texts_;
};

RepairPrompt build(const PromptInputs& in, PromptMode mode, retrieval::RichnessLevel richness,
                   const TemplateSet& templates = TemplateSet::embedded());

/// First prompt of a two-stage mode. PromptError for other modes.
RepairPrompt build_explanation_request(const PromptInputs& in, PromptMode mode,
                                       const TemplateSet& templates = TemplateSet::embedded());

/// Splits a rendered prompt back into its sections.
std::vector<Section> parse_sections(std::string_view rendered);

namespace detail {
const std::map<std::string, std::string>& embedded_templates();
}

}  // namespace dsrepair::prompt
