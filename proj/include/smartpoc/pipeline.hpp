#pragma once

#include "smartpoc/bce.hpp"
#include "smartpoc/dv.hpp"
#include "smartpoc/findings.hpp"
#include "smartpoc/gre.hpp"
#include "smartpoc/harness.hpp"
#include "smartpoc/llm.hpp"
#include "smartpoc/metrics.hpp"
#include "smartpoc/solidity_model.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace smartpoc {

struct RunConfig {
    std::string findings_path;
    FindingsFormat findings_format = FindingsFormat::NativeJson;
    std::string project_root;
    std::string out_dir;
    int workers = kDefaultInFlightLimit;
    EngineConfig engine;

    std::optional<std::string> transcript_path; // scripted LLM replies
    std::optional<std::string> llm_endpoint;    // live chat-completions URL
    std::string llm_model;                      // live backend model name

    std::optional<std::string> executor_script; // scripted forge rounds
    std::string forge_path = "forge";
    std::optional<std::string> fork_url;
    std::optional<std::string> callgraph_import;
    bool resume = false;
};

/// Structural checks only (worker and budget bounds, required paths,
/// backend selection); filesystem existence is checked where used.
void validate_config(const RunConfig& config);

struct FindingOutcome {
    Finding finding;
    Verdict verdict;
    std::string error; // stage error text when the run caught one
};

/// The injectable seams: every validate() run speaks to exactly one
/// gateway and one executor, owned by the caller.
struct PipelineServices {
    LlmGateway* llm = nullptr;
    Executor* executor = nullptr;
    bool query_head_block = false; // true only for live fork runs
};

/// Full pipeline over every finding in the corpus: parse the project
/// (cached per project directory, shared read-only), then per finding
/// extract the bug context, drive the generate-repair-execute loop, and
/// verify differentially. Per-finding stage errors become GenerationFailed
/// rows with the error recorded; environment errors abort the whole run.
/// Writes out/<finding-id>/{bundle/,attempts/,dv/,record.json} plus
/// report.json at the top level.
RunReport validate(const RunConfig& config, PipelineServices services);

/// Convenience wrapper that builds the backend and executor from the
/// config (transcript vs live endpoint, scripted vs real forge).
RunReport validate(const RunConfig& config);

/// Standalone first stage: write bundle artifacts for every finding
/// without generating PoCs.
void run_slice(const RunConfig& config, PipelineServices services);

/// Rebuild a report purely from the verdict records stored under a
/// previous run's output directory. `report_file` empty = no file write.
RunReport run_report(const std::string& out_dir, const std::string& report_file = "");

} // namespace smartpoc
