#pragma once

#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace smartpoc {

inline constexpr double kDefaultTemperature = 0.3;
inline constexpr int kDefaultInFlightLimit = 32;

/// Canonical stage tags. Every LLM call carries exactly one; the cost
/// ledger and the pipeline-order checks key on them.
bool is_known_stage(const std::string& stage);

struct PromptPayload {
    std::string system_text;
    std::string user_text;
    std::string stage;
    double temperature = kDefaultTemperature;
    std::string finding_id; // ledger attribution and mock transcript key
};

struct LlmReply {
    std::string text;
    long input_tokens = -1; // negative = backend reported no usage
    long output_tokens = -1;
    double latency_seconds = 0.0;
    std::string backend_id;
    bool tokens_estimated = false;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual LlmReply complete(const PromptPayload& p) = 0;
    virtual std::string id() const = 0;
};

/// Append-only record of one gateway call. seq is the global order of
/// completion across the whole run.
struct CallRecord {
    std::size_t seq = 0;
    std::string finding_id;
    std::string stage;
    long input_tokens = 0;
    long output_tokens = 0;
    double seconds = 0.0;
    bool tokens_estimated = false;
};

struct StageTotals {
    long input_tokens = 0;
    long output_tokens = 0;
    double seconds = 0.0;
    long calls = 0;
};

class CostLedger {
public:
    void record(CallRecord r);
    void note(const std::string& text);

    std::vector<CallRecord> records() const;
    std::vector<std::string> notes() const;
    std::map<std::string, StageTotals> by_stage() const;
    std::map<std::string, StageTotals> by_finding() const;
    StageTotals total() const;

private:
    mutable std::mutex mu_;
    std::vector<CallRecord> records_;
    std::vector<std::string> notes_;
};

struct GatewayOptions {
    int max_in_flight = kDefaultInFlightLimit;
    int transport_attempts = 3; // total tries on transport-class failures
    double backoff_initial_seconds = 0.5;
};

/// Shared front door for all LLM traffic: stage validation, in-flight
/// bound, transport retry, token accounting.
class LlmGateway {
public:
    explicit LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options = {});

    LlmReply complete(const PromptPayload& p);

    CostLedger& ledger() { return ledger_; }
    const CostLedger& ledger() const { return ledger_; }
    const GatewayOptions& options() const { return options_; }
    int peak_in_flight() const;

private:
    std::shared_ptr<LlmBackend> backend_;
    GatewayOptions options_;
    CostLedger ledger_;

    mutable std::mutex mu_;
    std::condition_variable slot_free_;
    int in_flight_ = 0;
    int peak_in_flight_ = 0;
    std::size_t next_seq_ = 0;
};

/// Deterministic transcript-driven backend. One record per line:
///   {"finding": id, "stage": tag, "index": n, "text": reply,
///    "input_tokens"?: n, "output_tokens"?: n}
/// Replies are keyed by (finding, stage) and consumed in index order;
/// running past the script is a test-configuration error.
class MockBackend : public LlmBackend {
public:
    explicit MockBackend(const std::string& transcript_path);

    LlmReply complete(const PromptPayload& p) override;
    std::string id() const override { return "mock"; }

    /// Calls seen so far, in order, as (finding, stage) pairs.
    std::vector<std::pair<std::string, std::string>> calls() const;

private:
    struct Entry {
        std::string text;
        long input_tokens = -1;
        long output_tokens = -1;
    };
    std::map<std::pair<std::string, std::string>, std::vector<Entry>> script_;
    std::map<std::pair<std::string, std::string>, std::size_t> cursor_;
    std::vector<std::pair<std::string, std::string>> calls_;
    mutable std::mutex mu_;
    std::string path_;
};

struct HttpBackendConfig {
    std::string base_url; // scheme://host[:port][/prefix]
    std::string api_key;
    std::string model;
    double timeout_seconds = 120.0;
};

/// Chat-completions client over HTTP(S). Configuration comes from the
/// environment: SMARTPOC_BASE_URL, SMARTPOC_API_KEY, SMARTPOC_MODEL.
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    static HttpBackendConfig config_from_env();

    LlmReply complete(const PromptPayload& p) override;
    std::string id() const override { return "http:" + config_.model; }

private:
    HttpBackendConfig config_;
};

/// Content of the first fenced code block; the whole text (with a
/// warning) when the reply has no fence.
std::string extract_code_block(const LlmReply& reply);

} // namespace smartpoc
