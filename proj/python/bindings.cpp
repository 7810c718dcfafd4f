// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dsrepair Authors

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dsrepair/api_retrieval.hpp"
#include "dsrepair/bug_enrichment.hpp"
#include "dsrepair/cli.hpp"
#include "dsrepair/doc_ingest.hpp"
#include "dsrepair/eval_harness.hpp"
#include "dsrepair/kg_store.hpp"
#include "dsrepair/llm_client.hpp"
#include "dsrepair/prompt_builder.hpp"
#include "dsrepair/sparql.hpp"

namespace py = pybind11;
using namespace dsrepair;

namespace {

class Graph {
public:
    explicit Graph(kg::KnowledgeGraph g) : g_(std::move(g)) {}

    static Graph from_dump(const std::string& text) { return Graph(kg::load_dump(text)); }

    std::string dump() const { return kg::save_dump(g_); }
    std::size_t size() const { return g_.size(); }

    std::vector<std::map<std::string, std::string>> query(const std::string& text) const {
        const auto q = kg::parse_select(text);
        std::vector<std::map<std::string, std::string>> rows;
        for (const auto& b : kg::execute(g_, q)) {
            std::map<std::string, std::string> row;
            for (const auto& [name, value] : b) {
                row[name] = std::visit(
                    [](const auto& v) -> std::string {
                        using T = std::decay_t<decltype(v)>;
                        if constexpr (std::is_same_v<T, kg::Iri>) return v.str();
                        else if constexpr (std::is_same_v<T, kg::Literal>) return v.value;
                        else return std::string(kg::to_string(v));
                    },
                    value);
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    std::string knowledge(const std::string& qualified_name, const std::string& richness) const {
        auto level = retrieval::richness_from_string(richness);
        if (!level) throw py::value_error("unknown richness level '" + richness + "'");
        retrieval::ApiInvocation inv{qualified_name, qualified_name, 0, true};
        auto block = retrieval::retrieve(g_, inv, *level);
        if (!block) return {};
        return retrieval::ApiKnowledge{{*block}, {}}.render();
    }

private:
    kg::KnowledgeGraph g_;
};

py::tuple ingest_jsonl(const std::string& jsonl) {
    auto r = ingest::ingest_corpus_text(jsonl);
    py::list errors;
    for (const auto& e : r.errors) errors.append(py::make_tuple(e.line, e.message));
    return py::make_tuple(Graph(std::move(r.graph)), errors);
}

py::list extract(const std::string& code) {
    py::list out;
    for (const auto& inv : retrieval::extract_invocations(code).invocations) {
        py::dict d;
        d["raw_chain"] = inv.raw_chain;
        d["qualified_name"] = inv.qualified_name;
        d["line"] = inv.source_line;
        d["resolved"] = inv.resolved;
        out.append(d);
    }
    return out;
}

double py_cost(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& usages, double input_per_million,
               double output_per_million) {
    std::vector<llm::Usage> u;
    for (auto [i, o] : usages) u.push_back({i, o});
    return llm::cost(u, llm::CostModel::per_million(input_per_million, output_per_million));
}

py::tuple summarize_anf(const std::vector<std::size_t>& anfs) {
    std::vector<eval::RunMetrics> reps;
    for (auto a : anfs) {
        eval::RunMetrics m;
        m.anf = a;
        reps.push_back(m);
    }
    const auto agg = eval::summarize(std::move(reps));
    return py::make_tuple(agg.median_index, agg.mean_anf, agg.std_anf);
}

py::tuple tests_of(const std::string& description, const std::string& harness) {
    auto spec = bug::extract_tests(description, harness);
    return py::make_tuple(spec.fixtures, spec.assertions);
}

py::tuple run_cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

std::vector<std::string> modes() {
    std::vector<std::string> v;
    for (auto m : prompt::kAllPromptModes) v.emplace_back(prompt::to_string(m));
    return v;
}

std::vector<std::string> richness_levels() {
    std::vector<std::string> v;
    for (auto r : retrieval::kAllRichnessLevels) v.emplace_back(retrieval::to_string(r));
    return v;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Knowledge-graph retrieval, prompt construction and metrics for data-science code repair";

    py::class_<Graph>(m, "KnowledgeGraph")
        .def_static("from_dump", &Graph::from_dump, py::arg("text"))
        .def("dump", &Graph::dump)
        .def("query", &Graph::query, py::arg("select"))
        .def("knowledge", &Graph::knowledge, py::arg("qualified_name"), py::arg("richness") = "plus_both")
        .def("__len__", &Graph::size);

    m.def("ingest", &ingest_jsonl, py::arg("jsonl"), "Ingest documentation records; returns (graph, [(line, message)])");
    m.def("extract_invocations", &extract, py::arg("code"));
    m.def("clean_stderr", [](const std::string& s) { return prompt::clean_stderr(s); }, py::arg("raw"));
    m.def("extract_tests", &tests_of, py::arg("description"), py::arg("harness") = "");
    m.def("cost", &py_cost, py::arg("usages"), py::arg("input_per_million"), py::arg("output_per_million"));
    m.def("format_rate", &eval::format_rate, py::arg("anf"), py::arg("n_tasks"));
    m.def("summarize_anf", &summarize_anf, py::arg("anfs"), "Returns (median_index, mean, population std)");
    m.def("prompt_hash", [](const std::string& p) { return llm::prompt_hash(p); }, py::arg("prompt"));
    m.def("modes", &modes);
    m.def("richness_levels", &richness_levels);
    m.def("run_cli", &run_cli, py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr)");

    py::register_exception<kg::QuerySyntaxError>(m, "QuerySyntaxError", PyExc_ValueError);
}
