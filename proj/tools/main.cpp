#include "smartpoc/errors.hpp"
#include "smartpoc/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <string>

namespace {

void add_corpus_options(CLI::App* cmd, smartpoc::RunConfig& config, std::string& format)
{
    cmd->add_option("--findings", config.findings_path, "Findings file")->required();
    cmd->add_option("--format", format, "Findings format: native-json or slither-json")
        ->default_val("native-json");
    cmd->add_option("--project", config.project_root, "Solidity project root")->required();
    cmd->add_option("--out", config.out_dir, "Output directory")->required();
    cmd->add_option("--callgraph", config.callgraph_import,
                    "Call-graph export to use instead of native call-site detection");
}

void add_backend_options(CLI::App* cmd, smartpoc::RunConfig& config)
{
    cmd->add_option("--transcript", config.transcript_path,
                    "Scripted LLM replies (offline mode)");
    cmd->add_option("--llm-endpoint", config.llm_endpoint,
                    "Chat-completions base URL (overrides SMARTPOC_BASE_URL)");
    cmd->add_option("--llm-model", config.llm_model,
                    "Model name (overrides SMARTPOC_MODEL)");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"smartpoc: turn static-analysis findings into executable Foundry "
                 "proof-of-concept tests with an exploitability verdict"};
    app.require_subcommand(1);

    smartpoc::RunConfig config;
    std::string format = "native-json";
    std::string report_dir;
    std::string report_file;

    auto* validate_cmd =
        app.add_subcommand("validate", "Run the full pipeline over a findings corpus");
    add_corpus_options(validate_cmd, config, format);
    add_backend_options(validate_cmd, config);
    validate_cmd->add_option("--workers", config.workers, "Concurrent findings")
        ->default_val(smartpoc::kDefaultInFlightLimit);
    validate_cmd
        ->add_option("--budget", config.engine.retry_budget,
                     "Generate-repair attempts per finding")
        ->default_val(smartpoc::kDefaultRetryBudget);
    validate_cmd
        ->add_option("--temperature", config.engine.temperature, "LLM sampling temperature")
        ->default_val(smartpoc::kDefaultTemperature);
    validate_cmd
        ->add_option("--timeout", config.engine.timeout_seconds,
                     "Per-command execution timeout in seconds")
        ->default_val(600.0);
    validate_cmd->add_option("--fake-executor", config.executor_script,
                             "Scripted forge outcomes (offline mode)");
    validate_cmd->add_option("--forge", config.forge_path, "forge binary")
        ->default_val("forge");
    validate_cmd->add_option("--fork-url", config.fork_url,
                             "RPC endpoint for fork-mode execution");
    validate_cmd->add_flag("--resume", config.resume,
                           "Skip findings that already have verdict records");

    auto* slice_cmd =
        app.add_subcommand("slice", "Extract bug-context bundles without generating PoCs");
    add_corpus_options(slice_cmd, config, format);
    add_backend_options(slice_cmd, config);

    auto* report_cmd =
        app.add_subcommand("report", "Rebuild the report from stored verdict records");
    report_cmd->add_option("--out", report_dir, "Run output directory")->required();
    report_cmd->add_option("--file", report_file,
                           "Also write the machine-readable report here");

    CLI11_PARSE(app, argc, argv);

    try {
        config.findings_format = smartpoc::parse_findings_format(format);
        if (validate_cmd->parsed()) {
            auto report = smartpoc::validate(config);
            std::fputs(report.human_summary.c_str(), stdout);
            return 0;
        }
        if (slice_cmd->parsed()) {
            smartpoc::validate_config(config);
            std::shared_ptr<smartpoc::LlmBackend> backend;
            if (config.transcript_path) {
                backend = std::make_shared<smartpoc::MockBackend>(*config.transcript_path);
            } else {
                auto http = smartpoc::HttpBackend::config_from_env();
                if (config.llm_endpoint)
                    http.base_url = *config.llm_endpoint;
                if (!config.llm_model.empty())
                    http.model = config.llm_model;
                backend = std::make_shared<smartpoc::HttpBackend>(std::move(http));
            }
            smartpoc::LlmGateway llm(backend);
            smartpoc::PipelineServices services;
            services.llm = &llm;
            smartpoc::run_slice(config, services);
            return 0;
        }
        auto report = smartpoc::run_report(report_dir, report_file);
        std::fputs(report.human_summary.c_str(), stdout);
        return 0;
    } catch (const smartpoc::EnvironmentError& e) {
        std::fprintf(stderr, "environment error: %s\n", e.what());
        return 2;
    } catch (const smartpoc::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
