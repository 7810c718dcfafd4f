// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors
//
// Converts API documentation records into knowledge-graph triples.
//
// Input is line-delimited JSON, one ApiRecord per line:
//   {"qualified_name", "expression", "explanation", "library", "module", "url",
//    "parameters": [{"name", "position", "dtype", "explanation", "optional"}],
//    "returns": [{"index", "dtype", "explanation"}], "version" (optional)}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dsrepair/kg_store.hpp"

namespace dsrepair::ingest {

struct ParamRecord {
    std::string name;
    std::uint32_t position = 0;
    std::string dtype;
    std::string explanation;
    bool optional = false;
};

struct ReturnRecord {
    std::uint32_t index = 0;
    std::string dtype;
    std::string explanation;
};

struct ApiRecord {
    std::string qualified_name;
    std::string expression;
    std::string explanation;
    std::string library;
    std::string module;
    std::string url;
    std::optional<std::string> version;
    std::vector<ParamRecord> parameters;
    std::vector<ReturnRecord> returns;
};

class RecordError : public std::runtime_error {
public:
    RecordError(std::string record, std::string field, const std::string& message)
        : std::runtime_error("record '" + (record.empty() ? std::string("<unnamed>") : record) +
                             "' field '" + field + "': " + message),
          record_(std::move(record)),
          field_(std::move(field)) {}

    const std::string& record() const noexcept { return record_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string record_;
    std::string field_;
};

/// `ds:<api>_parameter_<name>`
kg::Iri parameter_iri(std::string_view api, std::string_view param);
/// `ds:<api>_return_<index>`
kg::Iri return_iri(std::string_view api, std::uint32_t index);

void validate(const ApiRecord& r);

/// Emits, in order: has_name, has_expression, has_explanation,
/// belongsToLibrary, belongsToModule; then per parameter (sorted by position)
/// hasParameter, hasType, hasPosition, hasOptional, has_explanation; then per
/// return (sorted by index) hasReturn, hasType, has_explanation.
std::vector<kg::Triple> ingest_record(const ApiRecord& r);

ApiRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const ApiRecord& r);

struct IngestError {
    std::size_t line = 0;
    std::string message;
};

struct IngestResult {
    kg::KnowledgeGraph graph;  // frozen
    std::vector<IngestError> errors;
    std::size_t records = 0;  // records accepted, duplicates included
};

/// Bad lines are reported and skipped; ingestion continues.
IngestResult ingest_corpus_text(std::string_view text);
IngestResult ingest_corpus(const std::filesystem::path& path);

}  // namespace dsrepair::ingest
