// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include "dsrepair/doc_ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dsrepair::ingest {

using kg::Iri;
using kg::Literal;
using kg::Predicate;
using kg::Triple;
using nlohmann::json;

kg::Iri parameter_iri(std::string_view api, std::string_view param) {
    return Iri::from_name(std::string(api) + "_parameter_" + std::string(param));
}

kg::Iri return_iri(std::string_view api, std::uint32_t index) {
    return Iri::from_name(std::string(api) + "_return_" + std::to_string(index));
}

namespace {

bool has_space(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c <= 0x20 || c == 0x7f; });
}

void require_name(const ApiRecord& r, const std::string& field, const std::string& value) {
    if (value.empty()) throw RecordError(r.qualified_name, field, "must not be empty");
    if (!Iri::is_valid(std::string(Iri::kPrefix) + value)) {
        throw RecordError(r.qualified_name, field, "'" + value + "' is not a valid entity name");
    }
}

}  // namespace

void validate(const ApiRecord& r) {
    require_name(r, "qualified_name", r.qualified_name);
    require_name(r, "library", r.library);
    require_name(r, "module", r.module);
    if (r.qualified_name != r.library && !r.qualified_name.starts_with(r.library + ".")) {
        throw RecordError(r.qualified_name, "library",
                          "qualified name is not prefixed by library '" + r.library + "'");
    }
    if (r.expression.empty()) throw RecordError(r.qualified_name, "expression", "must not be empty");

    std::set<std::uint32_t> positions;
    std::set<std::string> names;
    for (const auto& p : r.parameters) {
        const std::string field = "parameters[" + p.name + "]";
        if (p.name.empty() || has_space(p.name)) {
            throw RecordError(r.qualified_name, "parameters.name", "invalid parameter name '" + p.name + "'");
        }
        if (!names.insert(p.name).second) {
            throw RecordError(r.qualified_name, field, "duplicate parameter name");
        }
        if (!positions.insert(p.position).second) {
            throw RecordError(r.qualified_name, field + ".position",
                              "duplicate position " + std::to_string(p.position));
        }
        if (p.dtype.empty()) throw RecordError(r.qualified_name, field + ".dtype", "must not be empty");
    }
    if (!positions.empty() && *positions.begin() != 0) {
        throw RecordError(r.qualified_name, "parameters.position", "positions must start at 0");
    }

    std::set<std::uint32_t> indices;
    for (const auto& ret : r.returns) {
        const std::string field = "returns[" + std::to_string(ret.index) + "]";
        if (!indices.insert(ret.index).second) {
            throw RecordError(r.qualified_name, field, "duplicate return index");
        }
        if (ret.dtype.empty()) throw RecordError(r.qualified_name, field + ".dtype", "must not be empty");
    }
}

std::vector<kg::Triple> ingest_record(const ApiRecord& r) {
    validate(r);
    const Iri api = Iri::from_name(r.qualified_name);
    std::vector<Triple> out;
    out.reserve(5 + 5 * r.parameters.size() + 3 * r.returns.size());

    out.push_back({api, Predicate::has_name, Literal{r.qualified_name}});
    out.push_back({api, Predicate::has_expression, Literal{r.expression}});
    out.push_back({api, Predicate::has_explanation, Literal{r.explanation}});
    out.push_back({api, Predicate::belongsToLibrary, Iri::from_name(r.library)});
    out.push_back({api, Predicate::belongsToModule, Iri::from_name(r.module)});

    auto params = r.parameters;
    std::sort(params.begin(), params.end(),
              [](const ParamRecord& a, const ParamRecord& b) { return a.position < b.position; });
    for (const auto& p : params) {
        const Iri pid = parameter_iri(r.qualified_name, p.name);
        out.push_back({api, Predicate::hasParameter, pid});
        out.push_back({pid, Predicate::hasType, Literal{p.dtype}});
        out.push_back({pid, Predicate::hasPosition, Literal{std::to_string(p.position)}});
        out.push_back({pid, Predicate::hasOptional, Literal{p.optional ? "true" : "false"}});
        out.push_back({pid, Predicate::has_explanation, Literal{p.explanation}});
    }

    auto rets = r.returns;
    std::sort(rets.begin(), rets.end(),
              [](const ReturnRecord& a, const ReturnRecord& b) { return a.index < b.index; });
    for (const auto& ret : rets) {
        const Iri rid = return_iri(r.qualified_name, ret.index);
        out.push_back({api, Predicate::hasReturn, rid});
        out.push_back({rid, Predicate::hasType, Literal{ret.dtype}});
        out.push_back({rid, Predicate::has_explanation, Literal{ret.explanation}});
    }

    for (const auto& t : out) kg::validate(t);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string get_string(const json& j, const char* key, const std::string& record, bool required) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) throw RecordError(record, key, "missing");
        return {};
    }
    if (!it->is_string()) throw RecordError(record, key, "must be a string");
    return it->get<std::string>();
}

std::uint32_t get_index(const json& j, const char* key, const std::string& record) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
        throw RecordError(record, key, "must be a non-negative integer");
    }
    auto v = it->get<std::int64_t>();
    if (v < 0 || v > static_cast<std::int64_t>(UINT32_MAX)) {
        throw RecordError(record, key, "must be a non-negative integer");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

ApiRecord record_from_json(const json& j) {
    if (!j.is_object()) throw RecordError("", "record", "must be a JSON object");
    ApiRecord r;
    r.qualified_name = get_string(j, "qualified_name", "", true);
    const auto& name = r.qualified_name;
    r.expression = get_string(j, "expression", name, true);
    r.explanation = get_string(j, "explanation", name, false);
    r.library = get_string(j, "library", name, true);
    r.module = get_string(j, "module", name, true);
    r.url = get_string(j, "url", name, false);
    if (auto it = j.find("version"); it != j.end() && !it->is_null()) {
        r.version = get_string(j, "version", name, false);
    }

    if (auto it = j.find("parameters"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw RecordError(name, "parameters", "must be an array");
        for (const auto& pj : *it) {
            if (!pj.is_object()) throw RecordError(name, "parameters", "entries must be objects");
            ParamRecord p;
            p.name = get_string(pj, "name", name, true);
            p.position = get_index(pj, "position", name);
            p.dtype = get_string(pj, "dtype", name, false);
            p.explanation = get_string(pj, "explanation", name, false);
            if (auto o = pj.find("optional"); o != pj.end()) {
                if (!o->is_boolean()) throw RecordError(name, "parameters.optional", "must be a boolean");
                p.optional = o->get<bool>();
            }
            r.parameters.push_back(std::move(p));
        }
    }
    if (auto it = j.find("returns"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw RecordError(name, "returns", "must be an array");
        for (const auto& rj : *it) {
            if (!rj.is_object()) throw RecordError(name, "returns", "entries must be objects");
            ReturnRecord ret;
            ret.index = get_index(rj, "index", name);
            ret.dtype = get_string(rj, "dtype", name, false);
            ret.explanation = get_string(rj, "explanation", name, false);
            r.returns.push_back(std::move(ret));
        }
    }
    return r;
}

json record_to_json(const ApiRecord& r) {
    json params = json::array();
    for (const auto& p : r.parameters) {
        params.push_back({{"name", p.name},
                          {"position", p.position},
                          {"dtype", p.dtype},
                          {"explanation", p.explanation},
                          {"optional", p.optional}});
    }
    json rets = json::array();
    for (const auto& ret : r.returns) {
        rets.push_back({{"index", ret.index}, {"dtype", ret.dtype}, {"explanation", ret.explanation}});
    }
    json j = {{"qualified_name", r.qualified_name},
              {"expression", r.expression},
              {"explanation", r.explanation},
              {"library", r.library},
              {"module", r.module},
              {"url", r.url},
              {"parameters", std::move(params)},
              {"returns", std::move(rets)}};
    if (r.version) j["version"] = *r.version;
    return j;
}

IngestResult ingest_corpus_text(std::string_view text) {
    IngestResult result;
    // Canonical triple list per API, to tell duplicates from conflicts.
    std::map<std::string, std::vector<Triple>> seen;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        try {
            ApiRecord r = record_from_json(json::parse(line));
            auto triples = ingest_record(r);
            auto [it, fresh] = seen.try_emplace(r.qualified_name, triples);
            if (!fresh && it->second != triples) {
                throw RecordError(r.qualified_name, "record",
                                  "conflicts with an earlier record of the same name");
            }
            if (r.version) {
                auto& versions = result.graph.library_versions();
                if (auto v = versions.find(r.library); v != versions.end() && v->second != *r.version) {
                    throw RecordError(r.qualified_name, "version",
                                      "library '" + r.library + "' already pinned to version " + v->second);
                }
                result.graph.set_library_version(r.library, *r.version);
            }
            for (auto& t : triples) result.graph.insert(std::move(t));
            ++result.records;
        } catch (const json::exception& e) {
            result.errors.push_back({line_no, std::string("invalid JSON: ") + e.what()});
        } catch (const std::exception& e) {
            result.errors.push_back({line_no, e.what()});
        }
    }
    result.graph.freeze();
    return result;
}

IngestResult ingest_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open documentation corpus '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return ingest_corpus_text(buf.str());
}

}  // namespace dsrepair::ingest
