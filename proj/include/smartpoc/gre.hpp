#pragma once

#include "smartpoc/bce.hpp"
#include "smartpoc/findings.hpp"
#include "smartpoc/harness.hpp"
#include "smartpoc/llm.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>

namespace smartpoc {

inline constexpr int kDefaultRetryBudget = 5;

/// One candidate test script moving through the generate-repair loop.
struct PoCDraft {
    enum class Provenance { Generated, Sanitized, Carried };
    std::string text;
    int attempt_index = 0;
    Provenance provenance = Provenance::Generated;
};

/// A fixed exemplar test shipped with the pipeline; shown to the model to
/// pin down the expected output shape.
extern const char* const kOneShotExemplar;

struct EngineConfig {
    int retry_budget = kDefaultRetryBudget;
    double temperature = kDefaultTemperature;
    std::string exemplar = kOneShotExemplar;
    double timeout_seconds = 600.0;
};

struct EngineResult {
    enum class Status { Success, Failed };
    Status status = Status::Failed;
    PoCDraft final_draft;         // meaningful when Success
    ExecutionOutcome outcome;     // meaningful when Success
    Diagnostics last_diagnostics; // meaningful when Failed
    int attempts_used = 0;
    int generation_calls = 0;

    bool ok() const { return status == Status::Success; }
};

/// Builds the generation prompt from its four fixed sections: project
/// information and build metadata, the finding, the bug-related code, and
/// the one-shot exemplar.  When prev is present the prompt additionally
/// carries exactly that attempt's draft and diagnostics (never older ones)
/// and is tagged as a repair.
PromptPayload build_generation_prompt(
    const Finding& f, const BugContextBundle& bundle, const EngineConfig& config,
    const std::optional<std::pair<PoCDraft, Diagnostics>>& prev = std::nullopt);

/// Pre-execution cleanup of a generated draft, confined to the draft text:
/// aligns the pragma with the target compiler, inserts the legacy ABI
/// directive for pre-0.8 targets, enforces the target import path, and
/// removes any function whose simple name and parameter types duplicate a
/// catalog entry.  Idempotent; non-conflicting bytes are preserved.  A
/// draft with no contract body is unsalvageable and raises StageError.
PoCDraft sanitize_draft(const PoCDraft& draft, const BugContextBundle& bundle);

/// When an execution succeeds, a post check may still reject it (the
/// instrumentation loop requires marker output); returning diagnostics
/// sends the engine into another repair round.
using PostCheck = std::function<std::optional<Diagnostics>(const ExecutionOutcome&)>;

/// The generate-repair-execute loop: up to config.retry_budget attempts of
/// generate (or repair), sanitize, write, compile, run.  Per-attempt
/// artifacts land under artifacts_dir/<k>/.  Environment errors propagate;
/// everything else becomes a failed attempt carrying diagnostics forward.
EngineResult run_engine(const Finding& f, const BugContextBundle& bundle, const Workspace& ws,
                        const EngineConfig& config, LlmGateway& llm, Executor& executor,
                        const std::filesystem::path& artifacts_dir);

/// Engine variant for an externally produced draft: attempt 0 consumes the
/// given draft without a generation call, repairs are tagged repair_stage,
/// and post_check (when set) can reject otherwise-successful runs.
EngineResult run_engine_from_draft(const Finding& f, const BugContextBundle& bundle,
                                   const Workspace& ws, const EngineConfig& config,
                                   LlmGateway& llm, Executor& executor,
                                   const std::filesystem::path& artifacts_dir, PoCDraft initial,
                                   const std::string& repair_stage,
                                   const PostCheck& post_check = nullptr);

} // namespace smartpoc
