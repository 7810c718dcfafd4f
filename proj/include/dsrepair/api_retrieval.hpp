// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// API knowledge retrieval: lexical extraction of API calls from buggy code,
// import-alias resolution, knowledge-graph lookup, and verbalization of the
// retrieved triples. Also hosts the plain-text window retrieval baseline.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsrepair/kg_store.hpp"

namespace dsrepair::retrieval {

/// Local name -> dotted qualified name, from `import X [as Y]` and
/// `from X import Y [as Z]`. Later bindings overwrite earlier ones.
struct ImportMap {
    std::map<std::string, std::string> aliases;

    /// Rewrites the root of `chain` through the map, if it is bound.
    std::optional<std::string> resolve(std::string_view chain) const;
};

struct ApiInvocation {
    std::string raw_chain;       // as written, whitespace removed: "np.flipud"
    std::string qualified_name;  // "numpy.flipud", or raw_chain when unresolved
    std::size_t source_line = 0;
    bool resolved = false;  // chain root was bound by an import

    friend bool operator==(const ApiInvocation&, const ApiInvocation&) = default;
};

struct Extraction {
    ImportMap imports;
    std::vector<ApiInvocation> invocations;  // first-occurrence order, unique by qualified_name
};

/// Reports every dotted identifier chain directly followed by `(`, ignoring
/// strings, comments, keywords, `def`/`class` headers, and method calls on
/// expression results (`f().g(...)`). Imports in `preamble` (code that runs
/// before `code`, such as a task's import lines) seed the alias map; `code`
/// may rebind them.
Extraction extract_invocations(std::string_view code, std::string_view preamble = {});

enum class RichnessLevel { expression_only, plus_explanation, plus_params_returns, plus_both };

inline constexpr RichnessLevel kAllRichnessLevels[] = {
    RichnessLevel::expression_only, RichnessLevel::plus_explanation,
    RichnessLevel::plus_params_returns, RichnessLevel::plus_both};

std::string_view to_string(RichnessLevel level) noexcept;
std::optional<RichnessLevel> richness_from_string(std::string_view name) noexcept;

struct KnowledgeBlock {
    std::string qualified_name;
    std::vector<std::string> sentences;

    friend bool operator==(const KnowledgeBlock&, const KnowledgeBlock&) = default;
};

struct ApiKnowledge {
    std::vector<KnowledgeBlock> blocks;
    std::vector<std::string> unresolved;  // names with no entity in the graph

    /// Sentences of all blocks, one per line.
    std::string render() const;
};

/// Verbalizes the entity of `inv.qualified_name`. nullopt when the graph has
/// no has_expression triple for it.
std::optional<KnowledgeBlock> retrieve(const kg::KnowledgeGraph& g, const ApiInvocation& inv,
                                       RichnessLevel level);

/// Which invocations feed retrieval when the failing statement is known.
enum class RetrievalScope {
    all,            // every invocation, in source order
    failing_first,  // invocations of the failing node first, then the rest
    failing_only,   // only invocations in the failing node
};

std::string_view to_string(RetrievalScope scope) noexcept;
std::optional<RetrievalScope> scope_from_string(std::string_view name) noexcept;

/// Orders `extraction.invocations` according to `scope`. Names are taken from
/// `failing_source` resolved through the same imports. With no failing source
/// the scope degrades to `all`.
std::vector<ApiInvocation> select_invocations(const Extraction& extraction,
                                              std::string_view failing_source,
                                              RetrievalScope scope);

ApiKnowledge retrieve_all(const kg::KnowledgeGraph& g, std::span<const ApiInvocation> invocations,
                          RichnessLevel level);

// ---------------------------------------------------------------------------
// Plain-text baseline

inline constexpr std::size_t kPlainTextWindow = 50;

/// For each document containing `keyword`, the whitespace-token window of
/// `window` tokens around its first occurrence. The window is centred on the
/// keyword and shifted to stay inside the document; documents shorter than
/// `window` yield the whole document.
std::vector<std::string> retrieve_plain_text(std::span<const std::string> documents,
                                             std::string_view keyword,
                                             std::size_t window = kPlainTextWindow);

/// Plain-text counterpart of retrieve_all(): one block per invocation with at
/// least one window; the block's sentences are the windows.
ApiKnowledge retrieve_plain_text_all(std::span<const std::string> documents,
                                     std::span<const ApiInvocation> invocations,
                                     std::size_t window = kPlainTextWindow);

/// UTF-8 text files of `dir` (non-recursive), sorted by file name.
std::vector<std::string> load_text_corpus(const std::filesystem::path& dir);

}  // namespace dsrepair::retrieval
