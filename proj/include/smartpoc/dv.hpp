#pragma once

#include "smartpoc/bce.hpp"
#include "smartpoc/findings.hpp"
#include "smartpoc/gre.hpp"
#include "smartpoc/harness.hpp"
#include "smartpoc/llm.hpp"
#include "smartpoc/solidity_model.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace smartpoc {

/// One step of a verification plan: a callable selected from the public
/// ABI plus the LLM's free-text note on how to invoke it.
struct PlanStep {
    CallableDescriptor callable;
    std::string note;

    /// Deterministic marker id: `name(type,type)`.
    std::string query_id() const;
};

struct DVPlan {
    std::vector<PlanStep> action;        // the triggering public call(s)
    std::vector<PlanStep> state_queries; // reads bracketing the trigger
    std::string rationale;
    std::string expected_direction;
    std::vector<std::string> dropped; // out-of-ABI proposals, for the record

    /// A plan needs both a trigger and something observable to diff.
    bool usable() const { return !action.empty() && !state_queries.empty(); }
};

struct StateSnapshot {
    enum class Phase { Pre, Post };
    Phase phase = Phase::Pre;
    /// (query id, trimmed value) in first-appearance order; a repeated id
    /// keeps its position and takes the last value.
    std::vector<std::pair<std::string, std::string>> values;

    const std::string* find(const std::string& query_id) const;
};

/// Every instrumentation log line follows `SMARTPOC|<phase>|<id>|<value>`
/// with phase one of PRE, TRIGGER, POST. parse_markers scans log lines for
/// that shape; lines that contain the sentinel but not the full grammar are
/// recorded as issues (and force NotValidated downstream).
inline constexpr const char* kMarkerSentinel = "SMARTPOC|";

struct MarkerScan {
    StateSnapshot pre;
    StateSnapshot post;
    int trigger_count = 0;
    std::vector<std::string> marker_lines; // raw matched lines, log order
    std::vector<std::string> issues;       // malformed marker-like lines
};

MarkerScan parse_markers(const std::vector<std::string>& logs);

struct Delta {
    std::string query_id;
    std::string before;
    std::string after;
};

struct DiffResult {
    std::vector<Delta> deltas;             // pre-snapshot order
    std::optional<std::string> mismatch;   // set when query-id sets differ
};

/// Snapshots are comparable only over equal query-id sets; a mismatch is
/// reported instead of a partial diff.
DiffResult diff_snapshots(const StateSnapshot& pre, const StateSnapshot& post);

struct Verdict {
    enum class Decision { Validated, NotValidated, GenerationFailed };
    Decision decision = Decision::NotValidated;
    std::string reason;

    StateSnapshot pre;
    StateSnapshot post;
    std::vector<Delta> deltas;
    std::vector<std::string> marker_lines;
    std::string llm_assessment; // raw dv-verify reply; empty when no call

    struct Cost {
        int llm_calls = 0;        // dv-extract + dv-insert + dv-verify
        int engine_attempts = 0;  // instrumentation execution rounds
    } cost;
};

std::string to_string(Verdict::Decision decision);
std::optional<Verdict::Decision> decision_from_string(const std::string& text);

/// Machine-readable export of one verdict (decision, evidence, marker
/// transcript, costs).
nlohmann::ordered_json verdict_record(const Verdict& verdict);

/// Ask the LLM for action/state-query selections out of the public ABI.
/// Proposals outside the ABI are dropped and recorded; an unusable reply
/// yields an empty plan (the caller short-circuits to NotValidated).
/// An empty ABI is a stage error.
DVPlan extract_plan(const Finding& f, const PoCDraft& poc,
                    const std::vector<CallableDescriptor>& abi, LlmGateway& llm);

/// One dv-insert call: rewrite the passing PoC so it performs the state
/// queries before the trigger, marks the trigger, and repeats the queries
/// after, logging each step in the marker grammar.
PoCDraft insert_instrumentation(const Finding& f, const PoCDraft& poc, const DVPlan& plan,
                                const BugContextBundle& bundle, LlmGateway& llm);

/// Post-success validator for the instrumentation engine loop: every
/// state query must appear in both PRE and POST, and at least one TRIGGER
/// marker must fire. A gap becomes synthesized runtime diagnostics, which
/// sends the engine into another repair round.
PostCheck markers_post_check(const DVPlan& plan);

/// Full verification stage for one finding whose PoC already executes:
/// extract plan, instrument, re-run through the engine (fresh budget,
/// repairs tagged dv-insert), parse markers, diff, and render the verdict.
/// Engine failure on the instrumented draft yields GenerationFailed.
Verdict run_dv(const Finding& f, const BugContextBundle& bundle, Workspace& ws,
               const EngineConfig& config, const EngineResult& gre, LlmGateway& llm,
               Executor& executor, const std::filesystem::path& artifacts_dir);

/// Final assessment: empty deltas never reach the LLM (NotValidated with
/// zero dv-verify calls); otherwise one dv-verify call whose reply decides
/// (a trimmed reply starting with VALIDATED affirms; anything else does
/// not).
Verdict render_verdict(const Finding& f, const DVPlan& plan, const StateSnapshot& pre,
                       const StateSnapshot& post, const std::vector<Delta>& deltas,
                       LlmGateway& llm);

} // namespace smartpoc
