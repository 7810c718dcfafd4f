// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/prompt_builder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace dsrepair::prompt {

std::string_view to_string(PromptMode m) noexcept {
    switch (m) {
        case PromptMode::dsrepair: return "dsrepair";
        case PromptMode::dsrepair_wo_api: return "dsrepair_wo_api";
        case PromptMode::dsrepair_wo_bug: return "dsrepair_wo_bug";
        case PromptMode::dsrepair_wo_api_bug: return "dsrepair_wo_api_bug";
        case PromptMode::self_debugging_s: return "self_debugging_s";
        case PromptMode::self_debugging_e: return "self_debugging_e";
        case PromptMode::chat_repair: return "chat_repair";
        case PromptMode::self_repair: return "self_repair";
    }
    return "dsrepair";
}

std::optional<PromptMode> mode_from_string(std::string_view name) noexcept {
    for (auto m : kAllPromptModes) {
        if (to_string(m) == name) return m;
    }
    return std::nullopt;
}

bool uses_api_knowledge(PromptMode m) noexcept {
    return m == PromptMode::dsrepair || m == PromptMode::dsrepair_wo_bug;
}

bool uses_bug_knowledge(PromptMode m) noexcept {
    return m == PromptMode::dsrepair || m == PromptMode::dsrepair_wo_api;
}

bool is_two_stage(PromptMode m) noexcept {
    return m == PromptMode::self_debugging_e || m == PromptMode::self_repair;
}

// ---------------------------------------------------------------------------
// stderr cleaning

namespace {

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < s.size()) out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_location_field(std::string_view f) {
    f = trim(f);
    if (f.empty()) return false;
    if (f.size() == 1 && std::isalpha(static_cast<unsigned char>(f[0]))) return true;  // drive letter
    if (f.find('/') != std::string_view::npos || f.find('\\') != std::string_view::npos) return true;
    if (f.ends_with(".py")) return true;
    return std::all_of(f.begin(), f.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// `FutureWarning: ...` or `/x/y.py:3: UserWarning: ...`
bool is_warning_line(std::string_view line) {
    if (line.empty() || std::isspace(static_cast<unsigned char>(line.front()))) return false;
    std::size_t start = 0;
    for (;;) {
        auto colon = line.find(':', start);
        if (colon == std::string_view::npos) return false;
        auto field = line.substr(start, colon - start);
        if (is_location_field(field)) {
            start = colon + 1;
            continue;
        }
        field = trim(field);
        return !field.empty() && field.find(' ') == std::string_view::npos && field.ends_with("Warning");
    }
}

bool is_library_frame(std::string_view line) {
    auto t = trim(line);
    if (!t.starts_with("File ")) return false;
    for (std::string_view marker : {"site-packages", "dist-packages", "/lib/python", "\\lib\\python", "<frozen"}) {
        if (t.find(marker) != std::string_view::npos) return true;
    }
    return false;
}

std::size_t indent_of(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    return i;
}

bool path_char(char c) {
    return !std::isspace(static_cast<unsigned char>(c)) &&
           std::string_view("\"'`,;()[]{}<>").find(c) == std::string_view::npos;
}

bool path_boundary_before(std::string_view s, std::size_t i) {
    if (i == 0) return true;
    const char p = s[i - 1];
    return !(std::isalnum(static_cast<unsigned char>(p)) || std::string_view("_.-~/\\:").find(p) != std::string_view::npos);
}

std::string last_component(std::string_view path, char sep) {
    while (path.size() > 1 && path.back() == sep) path.remove_suffix(1);
    auto pos = path.rfind(sep);
    return std::string(pos == std::string_view::npos ? path : path.substr(pos + 1));
}

// Returns the end of an absolute path starting at i, or i when none starts there.
std::size_t absolute_path_end(std::string_view s, std::size_t i, char& sep) {
    if (!path_boundary_before(s, i)) return i;
    std::size_t j = i;
    if (s[i] == '/') {
        sep = '/';
        j = i + 1;
    } else if (i + 2 < s.size() && std::isalpha(static_cast<unsigned char>(s[i])) && s[i + 1] == ':' &&
               (s[i + 2] == '\\' || s[i + 2] == '/')) {
        sep = s[i + 2];
        j = i + 3;
    } else {
        return i;
    }
    const std::size_t body = j;
    while (j < s.size() && path_char(s[j]) && s[j] != ':') ++j;
    // Require at least one name character after the root.
    bool named = false;
    for (std::size_t k = body; k < j; ++k) {
        if (std::isalnum(static_cast<unsigned char>(s[k])) || s[k] == '_' || s[k] == '.') named = true;
    }
    return named ? j : i;
}

std::string replace_paths(std::string_view line) {
    std::string out;
    for (std::size_t i = 0; i < line.size();) {
        char sep = '/';
        const auto end = absolute_path_end(line, i, sep);
        if (end > i) {
            out += last_component(line.substr(i, end - i), sep);
            i = end;
        } else {
            out.push_back(line[i++]);
        }
    }
    return out;
}

}  // namespace

bool contains_absolute_path(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        char sep = '/';
        if (absolute_path_end(text, i, sep) > i) return true;
    }
    return false;
}

std::string clean_stderr(std::string_view raw) {
    const auto lines = split_lines(raw);
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < lines.size();) {
        const auto line = lines[i];
        if (is_warning_line(line)) {
            ++i;
            while (i < lines.size() && !lines[i].empty() && indent_of(lines[i]) > 0) ++i;
            continue;
        }
        if (is_library_frame(line)) {
            const std::size_t frame_indent = indent_of(line);
            std::size_t frames = 0;
            while (i < lines.size() && is_library_frame(lines[i])) {
                ++frames;
                ++i;
                // The frame's source line is indented deeper than the frame header.
                while (i < lines.size() && !lines[i].empty() && indent_of(lines[i]) > frame_indent &&
                       !is_library_frame(lines[i]) && !trim(lines[i]).starts_with("File ")) {
                    ++i;
                }
            }
            kept.push_back(std::string(frame_indent, ' ') + "[" + std::to_string(frames) + " library frame" +
                           (frames == 1 ? "" : "s") + " omitted]");
            continue;
        }
        kept.push_back(replace_paths(line));
        ++i;
    }

    const bool all_blank = std::all_of(kept.begin(), kept.end(), [](const std::string& l) { return trim(l).empty(); });
    if (all_blank) return {};
    std::string out;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (i) out.push_back('\n');
        out += kept[i];
    }
    if (!raw.empty() && raw.back() == '\n') out.push_back('\n');
    return out;
}

// ---------------------------------------------------------------------------
// Bug knowledge

namespace {

std::string indented(std::string_view text) {
    std::string out;
    for (auto line : split_lines(text)) {
        out += "    ";
        out += line;
        out.push_back('\n');
    }
    if (out.empty()) out = "    \n";
    return out;
}

}  // namespace

std::string render_bug_knowledge(const bug::BugReport& r, const bug::TestSpec& tests) {
    std::string out;
    if (tests.empty()) {
        out += "Tests: none were given in the problem description.\n";
    } else {
        out += "Tests:\n" + indented(tests.tests_text());
    }

    switch (r.kind) {
        case bug::BugKind::runtime:
            out += "Failure type: runtime error. Execution stopped before the whole program ran.\n";
            out += "Last statement that executed successfully:\n" + indented(r.last_executed_source);
            out += "First statement that failed:\n" +
                   indented(r.failed_statement.empty() ? r.first_failed_source : r.failed_statement);
            if (!r.failed_statement.empty() && r.first_failed_source != r.failed_statement) {
                out += "Failing call inside that statement:\n" + indented(r.first_failed_source);
            }
            break;
        case bug::BugKind::assertion:
            out += "Failure type: assertion error. Every statement ran, but the result does not pass the tests.\n";
            out += "Last statement executed:\n" + indented(r.last_executed_source);
            out += "Value produced by the code:\n" + indented(r.captured_value_repr);
            if (r.expected_repr) out += "Value expected by the test:\n" + indented(*r.expected_repr);
            break;
        case bug::BugKind::unknown:
            out += "Failure type: unknown. The failure could not be located in the code.\n";
            break;
    }
    if (!r.note.empty()) out += "Note: " + r.note + "\n";
    out.pop_back();
    return out;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

struct TemplateSection {
    std::string header;
    std::string body;
};

std::string_view trim_newlines(std::string_view s) {
    while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<TemplateSection> parse_template(std::string_view text, const std::string& name) {
    std::vector<TemplateSection> out;
    std::string body;
    for (auto line : split_lines(text)) {
        if (line.starts_with("### ")) {
            if (!out.empty()) out.back().body = std::string(trim_newlines(body));
            out.push_back({std::string(trim(line.substr(4))), {}});
            body.clear();
        } else if (out.empty()) {
            if (!trim(line).empty()) throw PromptError("", "template '" + name + "': text before the first header");
        } else {
            body += line;
            body.push_back('\n');
        }
    }
    if (!out.empty()) out.back().body = std::string(trim_newlines(body));
    if (out.empty()) throw PromptError("", "template '" + name + "' has no sections");
    return out;
}

std::string substitute(const TemplateSection& s, const std::map<std::string, std::string>& slots) {
    std::string out;
    std::string_view b = s.body;
    std::size_t i = 0;
    while (i < b.size()) {
        auto open = b.find("{{", i);
        if (open == std::string_view::npos) {
            out += b.substr(i);
            break;
        }
        auto close = b.find("}}", open + 2);
        if (close == std::string_view::npos) throw PromptError(s.header, "unterminated placeholder");
        out += b.substr(i, open - i);
        const std::string key(trim(b.substr(open + 2, close - open - 2)));
        auto it = slots.find(key);
        if (it == slots.end()) throw PromptError(s.header, "unknown placeholder {{" + key + "}}");
        out += it->second;
        i = close + 2;
    }
    return out;
}

std::string render(const std::vector<Section>& sections) {
    std::string out;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i) out.push_back('\n');
        out += "### " + sections[i].header + "\n" + sections[i].body + "\n";
    }
    return out;
}

std::string placeholder_section(const std::vector<TemplateSection>& sections, std::string_view slot,
                                std::string_view fallback) {
    const std::string needle = "{{" + std::string(slot) + "}}";
    for (const auto& s : sections) {
        if (s.body.find(needle) != std::string::npos) return s.header;
    }
    return std::string(fallback);
}

bool mentions(const std::vector<TemplateSection>& sections, std::string_view slot) {
    const std::string needle = "{{" + std::string(slot) + "}}";
    return std::any_of(sections.begin(), sections.end(),
                       [&](const TemplateSection& s) { return s.body.find(needle) != std::string::npos; });
}

const char* template_name(PromptMode m) {
    switch (m) {
        case PromptMode::dsrepair:
        case PromptMode::dsrepair_wo_api:
        case PromptMode::dsrepair_wo_bug:
        case PromptMode::dsrepair_wo_api_bug: return "dsrepair";
        case PromptMode::self_debugging_s: return "self_debugging_s";
        case PromptMode::self_debugging_e: return "self_debugging_e";
        case PromptMode::chat_repair: return "chat_repair";
        case PromptMode::self_repair: return "self_repair";
    }
    return "dsrepair";
}

bool requires_error_message(PromptMode m) noexcept {
    return m == PromptMode::chat_repair || m == PromptMode::self_repair;
}

RepairPrompt assemble(std::vector<TemplateSection> sections, const PromptInputs& in, PromptMode mode,
                      retrieval::RichnessLevel richness, bool explanation_stage) {
    if (mode == PromptMode::dsrepair_wo_api || mode == PromptMode::dsrepair_wo_api_bug) {
        std::erase_if(sections, [](const auto& s) { return s.header == header::api; });
    }
    if (mode == PromptMode::dsrepair_wo_bug || mode == PromptMode::dsrepair_wo_api_bug) {
        std::erase_if(sections, [](const auto& s) { return s.header == header::bug; });
    }
    // Pure self-explanation does not see the error output.
    if (explanation_stage && mode == PromptMode::self_debugging_e) {
        std::erase_if(sections, [](const auto& s) { return s.header == header::error; });
    }

    std::map<std::string, std::string> slots;
    auto need = [&](std::string_view slot, std::string_view fallback_header, bool missing, const char* what) {
        if (mentions(sections, slot) && missing) {
            throw PromptError(placeholder_section(sections, slot, fallback_header), what);
        }
    };

    need("description", header::problem, trim(in.description).empty(), "problem description is empty");
    need("code", header::code, trim(in.buggy_code).empty(), "buggy code is empty");
    slots["description"] = std::string(trim_newlines(in.description));
    slots["code"] = std::string(trim_newlines(in.buggy_code));

    const std::string cleaned = std::string(trim_newlines(clean_stderr(in.stderr_raw)));
    need("error_message", header::error, requires_error_message(mode) && trim(cleaned).empty(),
         "mode requires an error message");
    slots["error_message"] = cleaned.empty() ? "No error message was produced." : cleaned;

    need("api_knowledge", header::api, !in.api.has_value(), "API knowledge was not provided");
    if (in.api) {
        const auto text = in.api->render();
        slots["api_knowledge"] = text.empty() ? "No documentation was found for the APIs used in the code." : text;
    }

    need("bug_knowledge", header::bug, !in.bug.has_value(), "bug report was not provided");
    if (in.bug) slots["bug_knowledge"] = render_bug_knowledge(*in.bug, in.tests);

    need("explanation", header::explanation, trim(in.explanation).empty(), "explanation from the first stage is empty");
    slots["explanation"] = std::string(trim_newlines(in.explanation));

    RepairPrompt out;
    out.mode = mode;
    out.richness = richness;
    for (const auto& s : sections) out.sections.push_back({s.header, substitute(s, slots)});
    out.rendered = render(out.sections);
    return out;
}

const std::vector<std::string>& dsrepair_headers() {
    static const std::vector<std::string> k = {
        std::string(header::problem), std::string(header::code),       std::string(header::error),
        std::string(header::api),     std::string(header::bug),        std::string(header::fact_check),
        std::string(header::format)};
    return k;
}

}  // namespace

const std::vector<std::string>& TemplateSet::names() {
    static const std::vector<std::string> k = {"dsrepair",         "explanation_request", "self_debugging_s",
                                               "self_debugging_e", "chat_repair",         "self_repair"};
    return k;
}

TemplateSet TemplateSet::embedded() {
    TemplateSet t;
    t.texts_ = detail::embedded_templates();
    return t;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    TemplateSet t = embedded();
    for (const auto& name : names()) {
        const auto path = dir / (name + ".tmpl");
        if (!std::filesystem::exists(path)) continue;
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        t.texts_[name] = buf.str();
    }
    // The dsrepair layout is fixed; overrides may only reword section bodies.
    std::vector<std::string> headers;
    for (const auto& s : parse_template(t.text("dsrepair"), "dsrepair")) headers.push_back(s.header);
    if (headers != dsrepair_headers()) {
        throw PromptError("", "template 'dsrepair' must have the seven standard sections in order");
    }
    return t;
}

const std::string& TemplateSet::text(const std::string& name) const {
    auto it = texts_.find(name);
    if (it == texts_.end()) throw PromptError("", "no template named '" + name + "'");
    return it->second;
}

RepairPrompt build(const PromptInputs& in, PromptMode mode, retrieval::RichnessLevel richness,
                   const TemplateSet& templates) {
    const std::string name = template_name(mode);
    return assemble(parse_template(templates.text(name), name), in, mode, richness, false);
}

RepairPrompt build_explanation_request(const PromptInputs& in, PromptMode mode, const TemplateSet& templates) {
    if (!is_two_stage(mode)) {
        throw PromptError("", std::string("mode ") + std::string(to_string(mode)) + " has a single stage");
    }
    return assemble(parse_template(templates.text("explanation_request"), "explanation_request"), in, mode,
                    retrieval::RichnessLevel::expression_only, true);
}

std::vector<Section> parse_sections(std::string_view rendered) {
    std::set<std::string> known;
    for (const auto& [name, text] : detail::embedded_templates()) {
        for (const auto& s : parse_template(text, name)) known.insert(s.header);
    }

    std::vector<Section> out;
    std::string body;
    auto close = [&] {
        if (out.empty()) return;
        // Sections are separated by one blank line.
        if (body.ends_with("\n\n")) body.pop_back();
        if (body.ends_with('\n')) body.pop_back();
        out.back().body = body;
    };
    for (auto line : split_lines(rendered)) {
        if (line.starts_with("### ") && known.contains(std::string(line.substr(4)))) {
            close();
            out.push_back({std::string(line.substr(4)), {}});
            body.clear();
        } else if (!out.empty()) {
            body += line;
            body.push_back('\n');
        }
    }
    close();
    return out;
}

}  // namespace dsrepair::prompt
