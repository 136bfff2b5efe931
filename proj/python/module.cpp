#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smartpoc/errors.hpp"
#include "smartpoc/pipeline.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace py = pybind11;
using namespace smartpoc;

namespace {

py::object json_to_py(const nlohmann::ordered_json& doc)
{
    return py::module_::import("json").attr("loads")(doc.dump());
}

/// Parsed project handle; read-only views over the source model.
struct Project {
    SourceModel model;

    explicit Project(const std::string& root, std::optional<std::string> callgraph_import)
    {
        ParseOptions options;
        options.callgraph_import = std::move(callgraph_import);
        model = parse_project(root, options);
    }
};

py::dict finding_to_dict(const Finding& f)
{
    py::dict d;
    d["id"] = f.id;
    d["tool"] = f.tool;
    d["project_ref"] = f.project_ref;
    d["narrative"] = f.narrative;
    d["severity"] = f.severity_text;
    d["type"] = f.vuln_type;
    if (f.label.has_value())
        d["label"] = *f.label;
    else
        d["label"] = py::none();
    py::list locations;
    for (const auto& loc : f.locations) {
        if (loc.kind == FindingLocation::Kind::FunctionName)
            locations.append(loc.function_name);
        else
            locations.append(py::make_tuple(loc.file, loc.line));
    }
    d["locations"] = locations;
    return d;
}

StateSnapshot snapshot_from(const py::object& values, StateSnapshot::Phase phase)
{
    StateSnapshot snap;
    snap.phase = phase;
    for (auto item : py::cast<py::dict>(values))
        snap.values.emplace_back(py::cast<std::string>(item.first),
                                 py::cast<std::string>(item.second));
    return snap;
}

} // namespace

PYBIND11_MODULE(_smartpoc, m)
{
    m.doc() = "Turns static-analysis findings into executable Foundry proof-of-concept "
              "tests with an exploitability verdict.";

    // base first so the derived translators registered after it win
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);
    py::register_exception<EnvironmentError>(m, "EnvironmentError", PyExc_RuntimeError);

    py::class_<Project>(m, "Project", "Lightweight parse of a Solidity project directory.")
        .def(py::init<const std::string&, std::optional<std::string>>(), py::arg("root"),
             py::arg("callgraph_import") = std::nullopt)
        .def_property_readonly(
            "compiler_version",
            [](const Project& p) -> py::object {
                if (p.model.metadata.compiler_version)
                    return py::cast(*p.model.metadata.compiler_version);
                return py::none();
            })
        .def("functions",
             [](const Project& p) {
                 std::vector<std::string> out;
                 out.reserve(p.model.functions.size());
                 for (const auto& f : p.model.functions)
                     out.push_back(f.qualified_name);
                 return out;
             })
        .def("call_edges",
             [](const Project& p) {
                 std::vector<std::pair<std::string, std::string>> out;
                 for (const auto& [caller, callee] : p.model.graph.edges())
                     out.emplace_back(p.model.functions[caller].qualified_name,
                                      p.model.functions[callee].qualified_name);
                 return out;
             })
        .def("public_abi", [](const Project& p) {
            std::vector<std::string> out;
            for (const auto& entry : public_abi(p.model))
                out.push_back(entry.signature());
            return out;
        });

    m.def(
        "load_findings",
        [](const std::string& path, const std::string& format) {
            auto corpus = load_findings(path, parse_findings_format(format));
            py::list rows;
            for (const auto& f : corpus.items)
                rows.append(finding_to_dict(f));
            return rows;
        },
        py::arg("path"), py::arg("format") = "native-json");

    m.def(
        "extract_code_block",
        [](const std::string& text) {
            LlmReply reply;
            reply.text = text;
            return extract_code_block(reply);
        },
        py::arg("text"), "Return the last fenced code block, or the text itself when unfenced.");

    m.def(
        "sanitize_draft",
        [](const std::string& text, const std::string& target_contract,
           const std::string& target_file, const std::string& compiler_version,
           const std::vector<std::tuple<std::string, std::string, std::vector<std::string>>>&
               catalog) {
            BugContextBundle bundle;
            bundle.target_contract = target_contract;
            bundle.target_file = target_file;
            bundle.build_metadata.compiler_version = compiler_version;
            for (const auto& [contract, name, params] : catalog)
                bundle.target_catalog.push_back({contract, name, params});
            PoCDraft draft;
            draft.text = text;
            return sanitize_draft(draft, bundle).text;
        },
        py::arg("text"), py::arg("target_contract"), py::arg("target_file"),
        py::arg("compiler_version"), py::arg("catalog") = py::list(),
        "Pre-execution draft cleanup: pragma alignment, import enforcement, duplicate "
        "removal. Raises StageError for unsalvageable drafts.");

    m.def(
        "parse_markers",
        [](const std::vector<std::string>& logs) {
            auto scan = parse_markers(logs);
            py::dict pre, post;
            for (const auto& [id, value] : scan.pre.values)
                pre[py::cast(id)] = value;
            for (const auto& [id, value] : scan.post.values)
                post[py::cast(id)] = value;
            py::dict out;
            out["pre"] = pre;
            out["post"] = post;
            out["trigger_count"] = scan.trigger_count;
            out["marker_lines"] = scan.marker_lines;
            out["issues"] = scan.issues;
            return out;
        },
        py::arg("logs"), "Scan execution logs for state markers.");

    m.def(
        "diff_snapshots",
        [](const py::object& pre, const py::object& post) {
            auto diff = diff_snapshots(snapshot_from(pre, StateSnapshot::Phase::Pre),
                                       snapshot_from(post, StateSnapshot::Phase::Post));
            py::list deltas;
            for (const auto& delta : diff.deltas)
                deltas.append(py::make_tuple(delta.query_id, delta.before, delta.after));
            py::dict out;
            out["deltas"] = deltas;
            out["mismatch"] = diff.mismatch ? py::cast(*diff.mismatch) : py::none();
            return out;
        },
        py::arg("pre"), py::arg("post"),
        "Compare two query-id -> value snapshots taken around the trigger.");

    m.def(
        "accuracy",
        [](long tp, long tn, long fp, long fn) {
            return accuracy(MetricCounts{tp, tn, fp, fn});
        },
        py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

    m.def(
        "ppv_npv",
        [](long tp, long tn, long fp, long fn) {
            auto rates = ppv_npv(MetricCounts{tp, tn, fp, fn});
            return py::make_tuple(rates.ppv ? py::cast(*rates.ppv) : py::none(),
                                  rates.npv ? py::cast(*rates.npv) : py::none());
        },
        py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

    m.def("format_percent", &format_percent, py::arg("ratio"));

    m.def(
        "run_validate",
        [](const std::string& findings, const std::string& project, const std::string& out,
           std::optional<std::string> transcript, std::optional<std::string> executor_script,
           std::optional<std::string> llm_endpoint, const std::string& llm_model,
           const std::string& forge, std::optional<std::string> fork_url, int workers,
           int budget, double temperature, double timeout, const std::string& format,
           std::optional<std::string> callgraph_import, bool resume) {
            RunConfig config;
            config.findings_path = findings;
            config.findings_format = parse_findings_format(format);
            config.project_root = project;
            config.out_dir = out;
            config.transcript_path = std::move(transcript);
            config.executor_script = std::move(executor_script);
            config.llm_endpoint = std::move(llm_endpoint);
            config.llm_model = llm_model;
            config.forge_path = forge;
            config.fork_url = std::move(fork_url);
            config.workers = workers;
            config.engine.retry_budget = budget;
            config.engine.temperature = temperature;
            config.engine.timeout_seconds = timeout;
            config.callgraph_import = std::move(callgraph_import);
            config.resume = resume;
            RunReport report;
            {
                py::gil_scoped_release release;
                report = validate(config);
            }
            return json_to_py(report.machine);
        },
        py::arg("findings"), py::arg("project"), py::arg("out"),
        py::arg("transcript") = std::nullopt, py::arg("executor_script") = std::nullopt,
        py::arg("llm_endpoint") = std::nullopt, py::arg("llm_model") = "",
        py::arg("forge") = "forge", py::arg("fork_url") = std::nullopt,
        py::arg("workers") = kDefaultInFlightLimit, py::arg("budget") = kDefaultRetryBudget,
        py::arg("temperature") = kDefaultTemperature, py::arg("timeout") = 600.0,
        py::arg("format") = "native-json", py::arg("callgraph_import") = std::nullopt,
        py::arg("resume") = false,
        "Run the full findings-to-verdict pipeline; returns the machine report.");

    m.def(
        "run_report",
        [](const std::string& out_dir) {
            RunReport report;
            {
                py::gil_scoped_release release;
                report = run_report(out_dir);
            }
            return json_to_py(report.machine);
        },
        py::arg("out_dir"), "Rebuild the report from stored verdict records.");
}
