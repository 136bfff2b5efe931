#include "smartpoc/llm.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"

#include "json.hpp"
#ifdef SMARTPOC_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <thread>

using nlohmann::json;

namespace smartpoc {

namespace {

const std::vector<std::string>& known_stages()
{
    static const std::vector<std::string> stages = {
        "bce-keys",  "bce-links", "gre-generate", "gre-repair",
        "dv-extract", "dv-insert", "dv-verify",
    };
    return stages;
}

} // namespace

bool is_known_stage(const std::string& stage)
{
    for (const auto& s : known_stages())
        if (s == stage)
            return true;
    return false;
}

void CostLedger::record(CallRecord r)
{
    std::lock_guard<std::mutex> lock(mu_);
    records_.push_back(std::move(r));
}

void CostLedger::note(const std::string& text)
{
    std::lock_guard<std::mutex> lock(mu_);
    notes_.push_back(text);
}

std::vector<CallRecord> CostLedger::records() const
{
    std::lock_guard<std::mutex> lock(mu_);
    return records_;
}

std::vector<std::string> CostLedger::notes() const
{
    std::lock_guard<std::mutex> lock(mu_);
    return notes_;
}

std::map<std::string, StageTotals> CostLedger::by_stage() const
{
    std::lock_guard<std::mutex> lock(mu_);
    std::map<std::string, StageTotals> out;
    for (const auto& r : records_) {
        auto& t = out[r.stage];
        t.input_tokens += r.input_tokens;
        t.output_tokens += r.output_tokens;
        t.seconds += r.seconds;
        t.calls += 1;
    }
    return out;
}

std::map<std::string, StageTotals> CostLedger::by_finding() const
{
    std::lock_guard<std::mutex> lock(mu_);
    std::map<std::string, StageTotals> out;
    for (const auto& r : records_) {
        auto& t = out[r.finding_id];
        t.input_tokens += r.input_tokens;
        t.output_tokens += r.output_tokens;
        t.seconds += r.seconds;
        t.calls += 1;
    }
    return out;
}

StageTotals CostLedger::total() const
{
    std::lock_guard<std::mutex> lock(mu_);
    StageTotals t;
    for (const auto& r : records_) {
        t.input_tokens += r.input_tokens;
        t.output_tokens += r.output_tokens;
        t.seconds += r.seconds;
        t.calls += 1;
    }
    return t;
}

LlmGateway::LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(options)
{
    if (!backend_)
        throw ConfigError("gateway needs a backend");
    if (options_.max_in_flight < 1)
        throw ConfigError("gateway in-flight limit must be >= 1");
    if (options_.transport_attempts < 1)
        throw ConfigError("gateway transport attempts must be >= 1");
}

int LlmGateway::peak_in_flight() const
{
    std::lock_guard<std::mutex> lock(mu_);
    return peak_in_flight_;
}

LlmReply LlmGateway::complete(const PromptPayload& p)
{
    if (!is_known_stage(p.stage))
        throw ConfigError("unknown stage tag \"" + p.stage + "\"");
    if (p.temperature < 0.0 || p.temperature > 2.0)
        throw ConfigError("temperature out of range [0,2]");

    {
        std::unique_lock<std::mutex> lock(mu_);
        slot_free_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
        ++in_flight_;
        peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
    }

    auto release = [&] {
        std::lock_guard<std::mutex> lock(mu_);
        --in_flight_;
        slot_free_.notify_one();
    };

    LlmReply reply;
    auto start = std::chrono::steady_clock::now();
    try {
        double backoff = options_.backoff_initial_seconds;
        for (int attempt = 1;; ++attempt) {
            try {
                reply = backend_->complete(p);
                break;
            } catch (const TransportError& e) {
                if (attempt >= options_.transport_attempts) {
                    throw StageError(p.stage, std::string("transport retries exhausted: ") +
                                                  e.what());
                }
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
                backoff *= 2.0;
            }
        }
    } catch (...) {
        release();
        throw;
    }
    auto end = std::chrono::steady_clock::now();
    release();

    if (reply.latency_seconds == 0.0)
        reply.latency_seconds = std::chrono::duration<double>(end - start).count();
    if (reply.input_tokens < 0 || reply.output_tokens < 0) {
        if (reply.input_tokens < 0)
            reply.input_tokens =
                static_cast<long>(count_tokens(p.system_text) + count_tokens(p.user_text));
        if (reply.output_tokens < 0)
            reply.output_tokens = static_cast<long>(count_tokens(reply.text));
        reply.tokens_estimated = true;
    }
    if (reply.backend_id.empty())
        reply.backend_id = backend_->id();

    CallRecord record;
    record.finding_id = p.finding_id;
    record.stage = p.stage;
    record.input_tokens = reply.input_tokens;
    record.output_tokens = reply.output_tokens;
    record.seconds = reply.latency_seconds;
    record.tokens_estimated = reply.tokens_estimated;
    {
        std::lock_guard<std::mutex> lock(mu_);
        record.seq = next_seq_++;
    }
    ledger_.record(record);
    if (reply.tokens_estimated)
        ledger_.note("estimated token counts for " + p.finding_id + "/" + p.stage +
                     " (backend reported no usage)");
    return reply;
}

MockBackend::MockBackend(const std::string& transcript_path) : path_(transcript_path)
{
    int lineno = 0;
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<long, Entry>>> staged;
    for (const auto& line : split_lines(read_file(transcript_path))) {
        ++lineno;
        if (trim(line).empty())
            continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object())
            throw ParseError(transcript_path, lineno, "invalid transcript record");
        for (const char* field : {"finding", "stage", "text"})
            if (!rec.contains(field) || !rec[field].is_string())
                throw ParseError(transcript_path, lineno,
                                 std::string("transcript record needs string field \"") + field +
                                     "\"");
        std::string stage = rec["stage"].get<std::string>();
        if (!is_known_stage(stage))
            throw ParseError(transcript_path, lineno, "unknown stage tag \"" + stage + "\"");
        Entry e;
        e.text = rec["text"].get<std::string>();
        if (rec.contains("input_tokens"))
            e.input_tokens = rec["input_tokens"].get<long>();
        if (rec.contains("output_tokens"))
            e.output_tokens = rec["output_tokens"].get<long>();
        long index = rec.value("index", -1);
        staged[{rec["finding"].get<std::string>(), stage}].emplace_back(index, std::move(e));
    }
    for (auto& [key, entries] : staged) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& dest = script_[key];
        for (auto& [index, entry] : entries)
            dest.push_back(std::move(entry));
    }
}

LlmReply MockBackend::complete(const PromptPayload& p)
{
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(p.finding_id, p.stage);
    calls_.push_back(key);
    auto it = script_.find(key);
    if (it == script_.end())
        throw TranscriptError("no transcript entries for finding \"" + p.finding_id +
                              "\" stage \"" + p.stage + "\" in " + path_);
    std::size_t& cursor = cursor_[key];
    if (cursor >= it->second.size())
        throw TranscriptError("transcript exhausted for finding \"" + p.finding_id +
                              "\" stage \"" + p.stage + "\" after " +
                              std::to_string(it->second.size()) + " replies");
    const Entry& e = it->second[cursor++];
    LlmReply reply;
    reply.text = e.text;
    reply.input_tokens = e.input_tokens;
    reply.output_tokens = e.output_tokens;
    reply.backend_id = id();
    return reply;
}

std::vector<std::pair<std::string, std::string>> MockBackend::calls() const
{
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config))
{
    if (config_.base_url.empty())
        throw ConfigError("HTTP backend needs a base URL (SMARTPOC_BASE_URL)");
    if (config_.model.empty())
        throw ConfigError("HTTP backend needs a model name (SMARTPOC_MODEL)");
}

HttpBackendConfig HttpBackend::config_from_env()
{
    HttpBackendConfig config;
    if (const char* v = std::getenv("SMARTPOC_BASE_URL"))
        config.base_url = v;
    if (const char* v = std::getenv("SMARTPOC_API_KEY"))
        config.api_key = v;
    if (const char* v = std::getenv("SMARTPOC_MODEL"))
        config.model = v;
    return config;
}

LlmReply HttpBackend::complete(const PromptPayload& p)
{
    json body = {
        {"model", config_.model},
        {"temperature", p.temperature},
        {"messages",
         {{{"role", "system"}, {"content", p.system_text}},
          {{"role", "user"}, {"content", p.user_text}}}},
    };

#ifndef SMARTPOC_WITH_TLS
    if (starts_with(config_.base_url, "https://"))
        throw ConfigError("this build has no TLS support; use an http:// endpoint");
#endif

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
    client.set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));
    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post("/chat/completions", headers, body.dump(), "application/json");
    if (!res)
        throw TransportError("connection to " + config_.base_url + " failed: " +
                             httplib::to_string(res.error()));
    if (res->status >= 500)
        throw TransportError("server error " + std::to_string(res->status) + " from " +
                             config_.base_url);
    if (res->status < 200 || res->status >= 300)
        throw EnvironmentError("endpoint rejected request with status " +
                               std::to_string(res->status) + ": " + res->body);

    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty())
        throw TransportError("malformed completion response from " + config_.base_url);

    LlmReply reply;
    const auto& choice = doc["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string())
        reply.text = choice["message"]["content"].get<std::string>();
    if (doc.contains("usage") && doc["usage"].is_object()) {
        reply.input_tokens = doc["usage"].value("prompt_tokens", -1);
        reply.output_tokens = doc["usage"].value("completion_tokens", -1);
    }
    reply.backend_id = id();
    return reply;
}

std::string extract_code_block(const LlmReply& reply)
{
    auto lines = split_lines(reply.text);
    std::size_t open = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (starts_with(trim(lines[i]), "```")) {
            open = i;
            break;
        }
    }
    if (open == lines.size()) {
        log_warn("reply has no fenced code block; using full text");
        return reply.text;
    }
    std::string block;
    for (std::size_t i = open + 1; i < lines.size(); ++i) {
        if (starts_with(trim(lines[i]), "```"))
            return block;
        block += lines[i];
        block += '\n';
    }
    log_warn("fenced code block never closed; using text after the fence");
    return block;
}

} // namespace smartpoc
