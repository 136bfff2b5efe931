#pragma once

#include "smartpoc/bce.hpp"
#include "smartpoc/findings.hpp"
#include "smartpoc/solidity_model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace smartpoc {

/// Output of one compile or test phase.  When success is false, raw is
/// guaranteed non-empty.
struct Diagnostics {
    enum class Phase { Compile, Runtime };

    struct Item {
        std::string message;
        std::string file; // empty when not parseable
        int line = -1;    // -1 when not parseable
    };

    Phase phase = Phase::Compile;
    bool success = false;
    std::string raw;
    std::vector<Item> items;
};

/// Combined result of a compile-then-run round.  ok_run is meaningful only
/// when ok_compile is true.
struct ExecutionOutcome {
    bool ok_compile = false;
    bool ok_run = false;
    Diagnostics compile_diag;
    Diagnostics runtime_diag;
    std::vector<std::string> logs; // ordered console lines from the test run
};

struct ForkConfig {
    std::string rpc_url;
    long long head_block = -1; // pinned once at workspace init; -1 = not recorded
};

/// An isolated per-finding Foundry project: copied sources, a single test
/// file, and a generated foundry.toml.
struct Workspace {
    std::string finding_id;
    std::filesystem::path root;
    std::filesystem::path test_file; // root/test/<Name>.t.sol
    std::string test_contract_name;
    std::string compiler_version;
    std::vector<std::string> remappings;
    bool legacy_abi_encoder = false; // set when compiler_version < 0.8
    std::optional<ForkConfig> fork;
};

struct WorkspaceOptions {
    std::filesystem::path base_dir;
    std::optional<std::string> fork_url;
    /// When false, the fork head block is not queried at init (offline runs
    /// with a scripted executor); the URL is still threaded through.
    bool query_head_block = true;
};

/// Queries eth_blockNumber on the endpoint once and returns the decoded
/// height.  Unreachable or malformed endpoints raise EnvironmentError.
long long fetch_head_block(const std::string& rpc_url);

/// Creates a fresh workspace under options.base_dir for the finding: copies
/// every model source file to root/src/<relative path>, writes foundry.toml
/// from the bundle's build metadata, and records the fork head block when a
/// fork URL is configured.  Re-initializing the same finding wipes the
/// previous root first.
Workspace init_workspace(const Finding& f, const BugContextBundle& bundle,
                         const SourceModel& model, const WorkspaceOptions& options);

/// Overwrites the workspace's test file with exactly `text`.  Drafts that
/// are not valid UTF-8 are rejected with a StageError.
void write_test(const Workspace& ws, const std::string& text);

/// True when every byte sequence in text is well-formed UTF-8.
bool is_valid_utf8(const std::string& text);

/// Pulls (message, file, line) items out of raw compiler or test output.
/// Tolerant by design: unrecognized lines are simply skipped.
std::vector<Diagnostics::Item> extract_failure_items(const std::string& raw,
                                                     Diagnostics::Phase phase);

struct RunResult {
    Diagnostics diag;
    std::vector<std::string> logs;
};

/// Compile/run backend.  The subprocess implementation shells out to forge;
/// the fake replays a script for offline runs.  Implementations must be
/// safe to call from multiple workers as long as each workspace is owned by
/// one worker.
class Executor {
public:
    virtual ~Executor() = default;
    virtual Diagnostics compile(const Workspace& ws) = 0;
    virtual RunResult run_tests(const Workspace& ws) = 0;
};

/// Runs compile and, when it succeeds, the test phase; assembles the
/// combined outcome.
ExecutionOutcome execute(Executor& executor, const Workspace& ws);

struct SubprocessConfig {
    std::string forge_path = "forge";
    double timeout_seconds = 600.0;
};

/// Real toolchain runner.  compile() is exactly `forge build`; run_tests()
/// is exactly `forge test -vvvv --fork-url <url>` when the workspace has a
/// fork configured and `forge test -vvvv` otherwise.  A missing binary
/// raises EnvironmentError; hitting the timeout yields failure diagnostics.
class SubprocessExecutor : public Executor {
public:
    explicit SubprocessExecutor(SubprocessConfig config = {});

    Diagnostics compile(const Workspace& ws) override;
    RunResult run_tests(const Workspace& ws) override;

private:
    SubprocessConfig config_;
};

/// Scripted executor for offline runs.  The script is JSONL; each record
/// describes one execution round for one finding:
///
///   {"finding": "f1", "attempt": 0, "ok_compile": true,
///    "compile_output": "", "ok_run": false, "run_output": "revert",
///    "logs": ["line"]}
///
/// Rounds replay per finding in ascending attempt order: each compile()
/// call consumes the next round, and run_tests() reads the round consumed
/// by the latest compile.  Running past the script raises TranscriptError.
class FakeExecutor : public Executor {
public:
    explicit FakeExecutor(const std::string& script_path);

    Diagnostics compile(const Workspace& ws) override;
    RunResult run_tests(const Workspace& ws) override;

    /// Sleep inserted into every call; lets tests force overlap when
    /// probing concurrency bounds.
    void set_delay_seconds(double seconds);
    int peak_in_flight() const;

private:
    struct Round {
        int attempt = 0;
        bool ok_compile = false;
        std::string compile_output;
        bool ok_run = false;
        std::string run_output;
        std::vector<std::string> logs;
    };

    const Round& current_round(const std::string& finding_id) const;
    void enter();
    void leave();

    std::map<std::string, std::vector<Round>> rounds_;
    std::map<std::string, std::size_t> cursor_;
    std::map<std::string, std::size_t> last_compiled_;
    double delay_seconds_ = 0.0;
    int in_flight_ = 0;
    int peak_in_flight_ = 0;
    mutable std::mutex mutex_;
};

} // namespace smartpoc
