#include "smartpoc/pipeline.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

#include <unistd.h>

namespace fs = std::filesystem;

namespace smartpoc {

namespace {

std::string safe_dir_name(const std::string& id)
{
    std::string out;
    bool changed = false;
    for (char c : id) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
                  c == '.';
        out += ok ? c : '-';
        changed = changed || !ok;
    }
    if (out.empty() || changed)
        out += "-" + std::to_string(std::hash<std::string>{}(id) % 0xffff);
    return out;
}

std::string first_line_of(const std::string& text)
{
    auto nl = text.find('\n');
    return nl == std::string::npos ? text : text.substr(0, nl);
}

bool is_executable_file(const fs::path& p)
{
    std::error_code ec;
    return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

void probe_forge(const std::string& forge_path)
{
    if (forge_path.find('/') != std::string::npos) {
        if (is_executable_file(forge_path))
            return;
        throw EnvironmentError("forge toolchain not found at '" + forge_path +
                               "'; install foundry or run with a scripted executor");
    }
    const char* path_env = std::getenv("PATH");
    std::string path = path_env ? path_env : "";
    for (const auto& dir : split(path, ':')) {
        if (dir.empty())
            continue;
        if (is_executable_file(fs::path(dir) / forge_path))
            return;
    }
    throw EnvironmentError("forge toolchain ('" + forge_path +
                           "') not found on PATH; install foundry or run with a scripted "
                           "executor");
}

nlohmann::ordered_json finding_json(const Finding& f)
{
    nlohmann::ordered_json rec;
    rec["id"] = f.id;
    rec["tool"] = f.tool;
    rec["project_ref"] = f.project_ref;
    rec["narrative"] = f.narrative;
    rec["severity"] = f.severity_text;
    rec["type"] = f.vuln_type;
    if (f.label.has_value())
        rec["label"] = *f.label;
    nlohmann::ordered_json locations = nlohmann::ordered_json::array();
    for (const auto& loc : f.locations) {
        if (loc.kind == FindingLocation::Kind::FunctionName)
            locations.push_back({{"function", loc.function_name}});
        else
            locations.push_back({{"file", loc.file}, {"line", loc.line}});
    }
    rec["locations"] = locations;
    return rec;
}

Finding finding_from_json(const nlohmann::json& rec)
{
    Finding f;
    f.id = rec.value("id", "");
    f.tool = rec.value("tool", "");
    f.project_ref = rec.value("project_ref", "");
    f.narrative = rec.value("narrative", "");
    f.severity_text = rec.value("severity", "");
    f.vuln_type = rec.value("type", "");
    if (rec.contains("label") && rec["label"].is_boolean())
        f.label = rec["label"].get<bool>();
    return f;
}

void write_record(const fs::path& finding_dir, const FindingOutcome& outcome)
{
    nlohmann::ordered_json rec;
    rec["finding"] = finding_json(outcome.finding);
    rec["verdict"] = verdict_record(outcome.verdict);
    rec["error"] = outcome.error;
    write_file((finding_dir / "record.json").string(), rec.dump(2) + "\n");
}

std::optional<FindingOutcome> load_record(const fs::path& record_path)
{
    std::error_code ec;
    if (!fs::exists(record_path, ec))
        return std::nullopt;
    auto doc = nlohmann::json::parse(read_file(record_path.string()), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("finding") ||
        !doc.contains("verdict"))
        return std::nullopt;

    FindingOutcome outcome;
    outcome.finding = finding_from_json(doc["finding"]);
    if (outcome.finding.id.empty())
        return std::nullopt;
    const auto& v = doc["verdict"];
    auto decision = decision_from_string(v.value("decision", ""));
    if (!decision)
        return std::nullopt;
    outcome.verdict.decision = *decision;
    outcome.verdict.reason = v.value("reason", "");
    outcome.verdict.llm_assessment = v.value("llm_assessment", "");
    if (v.contains("cost") && v["cost"].is_object()) {
        outcome.verdict.cost.llm_calls = v["cost"].value("llm_calls", 0);
        outcome.verdict.cost.engine_attempts = v["cost"].value("engine_attempts", 0);
    }
    outcome.error = doc.value("error", "");
    return outcome;
}

/// Source models parsed once per project directory and shared read-only
/// across every finding of that project.
class ModelCache {
public:
    ModelCache(std::string root, std::optional<std::string> callgraph_import)
        : root_(std::move(root)), callgraph_import_(std::move(callgraph_import))
    {
    }

    std::shared_ptr<const SourceModel> model_for(const Finding& f)
    {
        fs::path dir = root_;
        if (!f.project_ref.empty()) {
            std::error_code ec;
            fs::path nested = fs::path(root_) / f.project_ref;
            if (fs::is_directory(nested, ec))
                dir = nested;
        }
        std::string key = dir.string();
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end())
            return it->second;
        ParseOptions options;
        options.callgraph_import = callgraph_import_;
        auto model = std::make_shared<const SourceModel>(parse_project(key, options));
        cache_.emplace(key, model);
        return model;
    }

private:
    std::string root_;
    std::optional<std::string> callgraph_import_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<const SourceModel>> cache_;
};

FindingOutcome process_finding(const Finding& f, const SourceModel& model,
                               const RunConfig& config, PipelineServices& services,
                               const fs::path& finding_dir)
{
    FindingOutcome outcome;
    outcome.finding = f;
    try {
        BugContextBundle bundle = run_bce(f, model, *services.llm);
        write_bundle(bundle, (finding_dir / "bundle").string());

        WorkspaceOptions wopts;
        wopts.base_dir = finding_dir / "workspace";
        wopts.fork_url = config.fork_url;
        wopts.query_head_block = services.query_head_block;
        Workspace ws = init_workspace(f, bundle, model, wopts);

        EngineResult engine = run_engine(f, bundle, ws, config.engine, *services.llm,
                                         *services.executor, finding_dir / "attempts");
        if (!engine.ok()) {
            outcome.verdict.decision = Verdict::Decision::GenerationFailed;
            outcome.verdict.reason = "proof of concept never executed cleanly: " +
                                     first_line_of(engine.last_diagnostics.raw);
            outcome.verdict.cost.engine_attempts = engine.attempts_used;
        } else {
            outcome.verdict = run_dv(f, bundle, ws, config.engine, engine, *services.llm,
                                     *services.executor, finding_dir / "dv");
            outcome.verdict.cost.engine_attempts += engine.attempts_used;
        }
    } catch (const EnvironmentError&) {
        throw; // aborts the run
    } catch (const Error& e) {
        outcome.error = e.what();
        outcome.verdict = Verdict{};
        outcome.verdict.decision = Verdict::Decision::GenerationFailed;
        outcome.verdict.reason = std::string("stage error: ") + e.what();
    }

    // authoritative call count for the row, from the shared ledger
    auto per_finding = services.llm->ledger().by_finding();
    auto totals = per_finding.find(f.id);
    if (totals != per_finding.end())
        outcome.verdict.cost.llm_calls = static_cast<int>(totals->second.calls);

    write_record(finding_dir, outcome);
    return outcome;
}

} // namespace

void validate_config(const RunConfig& config)
{
    if (config.workers < 1)
        throw ConfigError("workers must be >= 1");
    if (config.engine.retry_budget < 1)
        throw ConfigError("retry budget must be >= 1");
    if (config.findings_path.empty())
        throw ConfigError("findings path is required");
    if (config.project_root.empty())
        throw ConfigError("project root is required");
    if (config.out_dir.empty())
        throw ConfigError("output directory is required");
    if (config.transcript_path && config.llm_endpoint)
        throw ConfigError("choose one LLM source: --transcript or --llm-endpoint");
    if (config.transcript_path && config.transcript_path->empty())
        throw ConfigError("transcript mode requires a transcript path");
}

RunReport validate(const RunConfig& config, PipelineServices services)
{
    validate_config(config);
    if (!services.llm || !services.executor)
        throw ConfigError("pipeline services must provide a gateway and an executor");

    FindingCorpus corpus = load_findings(config.findings_path, config.findings_format);
    if (!fs::is_directory(config.project_root))
        throw EnvironmentError("project root '" + config.project_root + "' is not a directory");
    fs::create_directories(config.out_dir);

    ModelCache models(config.project_root, config.callgraph_import);

    const std::size_t n = corpus.items.size();
    std::vector<FindingOutcome> outcomes(n);
    std::atomic<std::size_t> next{0};
    std::mutex fatal_mu;
    std::optional<std::string> fatal;

    auto worker = [&]() {
        for (;;) {
            {
                std::lock_guard<std::mutex> lock(fatal_mu);
                if (fatal)
                    return;
            }
            std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            const Finding& f = corpus.items[i];
            fs::path finding_dir = fs::path(config.out_dir) / safe_dir_name(f.id);
            try {
                if (config.resume) {
                    if (auto stored = load_record(finding_dir / "record.json")) {
                        outcomes[i] = std::move(*stored);
                        continue;
                    }
                }
                fs::create_directories(finding_dir);
                outcomes[i] = process_finding(f, *models.model_for(f), config, services,
                                              finding_dir);
            } catch (const EnvironmentError& e) {
                std::lock_guard<std::mutex> lock(fatal_mu);
                if (!fatal)
                    fatal = e.what();
                return;
            } catch (const Error& e) {
                // errors raised outside the staged path (project parse,
                // record write) still isolate to this finding's row
                FindingOutcome failed;
                failed.finding = f;
                failed.error = e.what();
                failed.verdict.decision = Verdict::Decision::GenerationFailed;
                failed.verdict.reason = std::string("stage error: ") + e.what();
                fs::create_directories(finding_dir);
                write_record(finding_dir, failed);
                outcomes[i] = std::move(failed);
            }
        }
    };

    std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(config.workers),
                                             std::max<std::size_t>(n, 1));
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t)
        threads.emplace_back(worker);
    for (auto& t : threads)
        t.join();
    if (fatal)
        throw EnvironmentError(*fatal);

    std::vector<Finding> findings;
    std::vector<VerdictRow> rows;
    findings.reserve(n);
    rows.reserve(n);
    for (const auto& outcome : outcomes) {
        findings.push_back(outcome.finding);
        rows.push_back(make_row(outcome.finding, outcome.verdict, outcome.error));
    }

    nlohmann::ordered_json echo;
    echo["findings"] = config.findings_path;
    echo["project"] = config.project_root;
    echo["workers"] = config.workers;
    echo["budget"] = config.engine.retry_budget;
    echo["temperature"] = config.engine.temperature;
    echo["backend"] = config.transcript_path ? "transcript" : "live";
    echo["executor"] = config.executor_script ? "scripted" : "forge";
    if (config.fork_url)
        echo["fork_url"] = *config.fork_url;
    echo["resume"] = config.resume;

    return emit_report(findings, rows, services.llm->ledger(),
                       fs::path(config.out_dir) / "report.json", echo);
}

RunReport validate(const RunConfig& config)
{
    validate_config(config);

    std::shared_ptr<LlmBackend> backend;
    if (config.transcript_path) {
        backend = std::make_shared<MockBackend>(*config.transcript_path);
    } else {
        HttpBackendConfig http = HttpBackend::config_from_env();
        if (config.llm_endpoint)
            http.base_url = *config.llm_endpoint;
        if (!config.llm_model.empty())
            http.model = config.llm_model;
        backend = std::make_shared<HttpBackend>(std::move(http));
    }
    LlmGateway llm(backend);

    std::unique_ptr<Executor> executor;
    bool real_executor = !config.executor_script.has_value();
    if (real_executor) {
        probe_forge(config.forge_path);
        SubprocessConfig sub;
        sub.forge_path = config.forge_path;
        sub.timeout_seconds = config.engine.timeout_seconds;
        executor = std::make_unique<SubprocessExecutor>(sub);
    } else {
        executor = std::make_unique<FakeExecutor>(*config.executor_script);
    }

    PipelineServices services;
    services.llm = &llm;
    services.executor = executor.get();
    services.query_head_block = real_executor && config.fork_url.has_value();
    return validate(config, services);
}

void run_slice(const RunConfig& config, PipelineServices services)
{
    validate_config(config);
    if (!services.llm)
        throw ConfigError("slice needs an LLM gateway for key identification");

    FindingCorpus corpus = load_findings(config.findings_path, config.findings_format);
    if (!fs::is_directory(config.project_root))
        throw EnvironmentError("project root '" + config.project_root + "' is not a directory");
    fs::create_directories(config.out_dir);
    ModelCache models(config.project_root, config.callgraph_import);

    for (const auto& f : corpus.items) {
        fs::path finding_dir = fs::path(config.out_dir) / safe_dir_name(f.id);
        try {
            BugContextBundle bundle = run_bce(f, *models.model_for(f), *services.llm);
            write_bundle(bundle, (finding_dir / "bundle").string());
        } catch (const EnvironmentError&) {
            throw;
        } catch (const Error& e) {
            log_warn("slice failed for finding '" + f.id + "': " + e.what());
        }
    }
}

RunReport run_report(const std::string& out_dir, const std::string& report_file)
{
    std::error_code ec;
    if (!fs::is_directory(out_dir, ec))
        throw StageError("report", "'" + out_dir + "' is not a directory");

    std::vector<fs::path> record_paths;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (!entry.is_directory())
            continue;
        fs::path record = entry.path() / "record.json";
        if (fs::exists(record, ec))
            record_paths.push_back(record);
    }
    std::sort(record_paths.begin(), record_paths.end());
    if (record_paths.empty())
        throw StageError("report",
                         "no verdict records under '" + out_dir +
                             "'; run validate before report");

    std::vector<Finding> findings;
    std::vector<VerdictRow> rows;
    for (const auto& path : record_paths) {
        auto outcome = load_record(path);
        if (!outcome)
            throw StageError("report", "unreadable verdict record: " + path.string());
        findings.push_back(outcome->finding);
        rows.push_back(make_row(outcome->finding, outcome->verdict, outcome->error));
    }

    CostLedger empty;
    return emit_report(findings, rows, empty, report_file);
}

} // namespace smartpoc
