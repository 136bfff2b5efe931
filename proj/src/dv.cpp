#include "smartpoc/dv.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/json_util.hpp"
#include "smartpoc/text_util.hpp"

#include <cctype>
#include <filesystem>
#include <memory>
#include <set>

namespace fs = std::filesystem;

namespace smartpoc {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::string upper(std::string s)
{
    for (auto& c : s)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string short_signature(const CallableDescriptor& c)
{
    std::string s = c.name + "(";
    for (std::size_t i = 0; i < c.parameter_types.size(); ++i) {
        if (i)
            s += ",";
        s += c.parameter_types[i];
    }
    return s + ")";
}

/// Accepts the full signature, the signature without the return clause,
/// the unqualified form, or a bare name when only one entry carries it.
const CallableDescriptor* match_abi(const std::string& proposal,
                                    const std::vector<CallableDescriptor>& abi)
{
    std::string want = trim(proposal);
    if (want.empty())
        return nullptr;
    for (const auto& c : abi) {
        if (want == c.signature() || want == short_signature(c) ||
            want == c.contract + "." + short_signature(c))
            return &c;
    }
    if (want.find('(') == std::string::npos) {
        const CallableDescriptor* hit = nullptr;
        for (const auto& c : abi) {
            if (c.name != want)
                continue;
            if (hit)
                return nullptr; // ambiguous
            hit = &c;
        }
        return hit;
    }
    return nullptr;
}

void set_value(StateSnapshot& snapshot, const std::string& id, const std::string& value)
{
    for (auto& [existing, stored] : snapshot.values) {
        if (existing == id) {
            stored = value; // last occurrence wins, position kept
            return;
        }
    }
    snapshot.values.emplace_back(id, value);
}

std::vector<PlanStep> collect_steps(const nlohmann::json& list,
                                    const std::vector<CallableDescriptor>& abi,
                                    std::vector<std::string>& dropped)
{
    std::vector<PlanStep> steps;
    if (!list.is_array())
        return steps;
    for (const auto& item : list) {
        std::string proposal;
        std::string note;
        if (item.is_string()) {
            proposal = item.get<std::string>();
        } else if (item.is_object()) {
            if (item.contains("signature") && item["signature"].is_string())
                proposal = item["signature"].get<std::string>();
            if (item.contains("note") && item["note"].is_string())
                note = item["note"].get<std::string>();
        }
        if (proposal.empty())
            continue;
        if (const CallableDescriptor* hit = match_abi(proposal, abi)) {
            PlanStep step;
            step.callable = *hit;
            step.note = note;
            steps.push_back(std::move(step));
        } else {
            dropped.push_back(trim(proposal));
        }
    }
    return steps;
}

std::string plan_lines(const std::vector<PlanStep>& steps)
{
    std::string out;
    for (const auto& step : steps) {
        out += "- " + step.callable.signature();
        if (!step.note.empty())
            out += " -- " + step.note;
        out += "\n";
    }
    return out;
}

std::string first_line_of(const std::string& text)
{
    auto nl = text.find('\n');
    return nl == std::string::npos ? text : text.substr(0, nl);
}

} // namespace

std::string PlanStep::query_id() const
{
    return short_signature(callable);
}

const std::string* StateSnapshot::find(const std::string& query_id) const
{
    for (const auto& [id, value] : values)
        if (id == query_id)
            return &value;
    return nullptr;
}

MarkerScan parse_markers(const std::vector<std::string>& logs)
{
    MarkerScan scan;
    scan.pre.phase = StateSnapshot::Phase::Pre;
    scan.post.phase = StateSnapshot::Phase::Post;
    for (const auto& line : logs) {
        auto at = line.find(kMarkerSentinel);
        if (at == std::string::npos)
            continue;
        std::string marker = trim(line.substr(at));
        scan.marker_lines.push_back(marker);

        auto p1 = marker.find('|');
        auto p2 = marker.find('|', p1 + 1);
        auto p3 = p2 == std::string::npos ? std::string::npos : marker.find('|', p2 + 1);
        if (p3 == std::string::npos) {
            scan.issues.push_back("malformed marker line: " + marker);
            continue;
        }
        std::string phase = marker.substr(p1 + 1, p2 - p1 - 1);
        std::string id = trim(marker.substr(p2 + 1, p3 - p2 - 1));
        std::string value = trim(marker.substr(p3 + 1));
        if (id.empty()) {
            scan.issues.push_back("marker with empty query id: " + marker);
            continue;
        }
        if (phase == "TRIGGER") {
            ++scan.trigger_count;
        } else if (phase == "PRE") {
            set_value(scan.pre, id, value);
        } else if (phase == "POST") {
            set_value(scan.post, id, value);
        } else {
            scan.issues.push_back("unknown marker phase '" + phase + "': " + marker);
        }
    }
    return scan;
}

DiffResult diff_snapshots(const StateSnapshot& pre, const StateSnapshot& post)
{
    DiffResult out;
    std::set<std::string> pre_ids;
    std::set<std::string> post_ids;
    for (const auto& [id, value] : pre.values)
        pre_ids.insert(id);
    for (const auto& [id, value] : post.values)
        post_ids.insert(id);

    if (pre_ids != post_ids) {
        std::vector<std::string> missing_post;
        std::vector<std::string> missing_pre;
        for (const auto& id : pre_ids)
            if (!post_ids.count(id))
                missing_post.push_back(id);
        for (const auto& id : post_ids)
            if (!pre_ids.count(id))
                missing_pre.push_back(id);
        std::string msg = "snapshot query-id sets differ";
        if (!missing_post.empty())
            msg += "; missing from post: " + join(missing_post, ", ");
        if (!missing_pre.empty())
            msg += "; missing from pre: " + join(missing_pre, ", ");
        out.mismatch = msg;
        return out;
    }

    for (const auto& [id, before] : pre.values) {
        const std::string* after = post.find(id);
        if (trim(before) != trim(*after))
            out.deltas.push_back({id, before, *after});
    }
    return out;
}

std::string to_string(Verdict::Decision decision)
{
    switch (decision) {
    case Verdict::Decision::Validated:
        return "Validated";
    case Verdict::Decision::NotValidated:
        return "NotValidated";
    case Verdict::Decision::GenerationFailed:
        return "GenerationFailed";
    }
    return "NotValidated";
}

std::optional<Verdict::Decision> decision_from_string(const std::string& text)
{
    if (text == "Validated")
        return Verdict::Decision::Validated;
    if (text == "NotValidated")
        return Verdict::Decision::NotValidated;
    if (text == "GenerationFailed")
        return Verdict::Decision::GenerationFailed;
    return std::nullopt;
}

nlohmann::ordered_json verdict_record(const Verdict& verdict)
{
    auto snapshot_json = [](const StateSnapshot& snapshot) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& [id, value] : snapshot.values)
            rows.push_back({{"query", id}, {"value", value}});
        return rows;
    };
    nlohmann::ordered_json deltas = nlohmann::ordered_json::array();
    for (const auto& delta : verdict.deltas)
        deltas.push_back(
            {{"query", delta.query_id}, {"before", delta.before}, {"after", delta.after}});

    nlohmann::ordered_json record;
    record["decision"] = to_string(verdict.decision);
    record["reason"] = verdict.reason;
    record["evidence"] = {{"pre", snapshot_json(verdict.pre)},
                          {"post", snapshot_json(verdict.post)},
                          {"deltas", deltas}};
    record["markers"] = verdict.marker_lines;
    record["llm_assessment"] = verdict.llm_assessment;
    record["cost"] = {{"llm_calls", verdict.cost.llm_calls},
                      {"engine_attempts", verdict.cost.engine_attempts}};
    return record;
}

DVPlan extract_plan(const Finding& f, const PoCDraft& poc,
                    const std::vector<CallableDescriptor>& abi, LlmGateway& llm)
{
    if (abi.empty())
        throw StageError("dv-extract", "public ABI is empty; nothing to select from");

    std::string user_text = "## Finding\n";
    user_text += f.narrative.empty() ? f.vuln_type : f.narrative;
    user_text += "\n\n## Passing proof-of-concept test\n```solidity\n" + poc.text + "```\n";
    user_text += "\n## Public ABI\n";
    for (const auto& c : abi)
        user_text += "- " + c.signature() + "\n";
    user_text +=
        "\n## Instructions\n"
        "Pick the action (the public call or calls that trigger the exploit) and the state "
        "queries (reads whose values should change if the vulnerability is real). Choose "
        "only from the ABI above; do not invent functions.\n"
        "Reply with a JSON object of this shape:\n"
        "{\"action\": [{\"signature\": \"...\", \"note\": \"...\"}], "
        "\"state_queries\": [{\"signature\": \"...\", \"note\": \"...\"}], "
        "\"rationale\": \"...\", \"expected_direction\": \"...\"}\n";

    PromptPayload payload;
    payload.system_text = "You plan differential state checks that confirm smart-contract "
                          "exploits by comparing state before and after the trigger.";
    payload.user_text = user_text;
    payload.stage = "dv-extract";
    payload.finding_id = f.id;

    LlmReply reply;
    try {
        reply = llm.complete(payload);
    } catch (const TransportError& e) {
        throw StageError("dv-extract", e.what());
    }

    DVPlan plan;
    auto parsed = find_json_payload(reply.text);
    if (!parsed || !parsed->is_object()) {
        log_warn("dv-extract reply carries no JSON object; plan stays empty");
        return plan;
    }
    plan.action = collect_steps(parsed->value("action", nlohmann::json::array()), abi,
                                plan.dropped);
    plan.state_queries = collect_steps(parsed->value("state_queries", nlohmann::json::array()),
                                       abi, plan.dropped);
    plan.rationale = parsed->value("rationale", "");
    plan.expected_direction = parsed->value("expected_direction", "");
    for (const auto& name : plan.dropped)
        log_note("dv-extract dropped out-of-ABI proposal: " + name);
    return plan;
}

PoCDraft insert_instrumentation(const Finding& f, const PoCDraft& poc, const DVPlan& plan,
                                const BugContextBundle& bundle, LlmGateway& llm)
{
    std::string user_text = "## Current passing test\n```solidity\n" + poc.text + "```\n";
    user_text += "\n## Verification plan\n";
    if (!plan.rationale.empty())
        user_text += "Rationale: " + plan.rationale + "\n";
    if (!plan.expected_direction.empty())
        user_text += "Expected change: " + plan.expected_direction + "\n";
    user_text += "Action (the trigger):\n" + plan_lines(plan.action);
    user_text += "State queries:\n" + plan_lines(plan.state_queries);

    user_text += "\n## Instructions\n"
                 "Rewrite the test so that it:\n"
                 "1. performs every state query before the trigger and logs each result as a "
                 "single line `SMARTPOC|PRE|<query-id>|<value>`\n"
                 "2. logs the trigger step as `SMARTPOC|TRIGGER|<action-id>|executed` right "
                 "where the exploit fires\n"
                 "3. repeats every state query after the trigger and logs each result as "
                 "`SMARTPOC|POST|<query-id>|<value>`\n"
                 "Build each marker with string concatenation (vm.toString for values) so the "
                 "whole marker is one log line. Use these exact ids:\n";
    for (const auto& step : plan.state_queries)
        user_text += "- query id `" + step.query_id() + "` for " + step.callable.signature() +
                     "\n";
    for (const auto& step : plan.action)
        user_text += "- action id `" + step.query_id() + "` for " + step.callable.signature() +
                     "\n";
    user_text += "Keep the exploit logic of test contract " + bundle.target_contract +
                 "PoC unchanged otherwise. Reply with the complete test file in a single "
                 "```solidity code block.\n";

    PromptPayload payload;
    payload.system_text = "You instrument Foundry proof-of-concept tests with structured "
                          "state logging.";
    payload.user_text = user_text;
    payload.stage = "dv-insert";
    payload.finding_id = f.id;

    LlmReply reply;
    try {
        reply = llm.complete(payload);
    } catch (const TransportError& e) {
        throw StageError("dv-insert", e.what());
    }

    PoCDraft draft;
    draft.text = extract_code_block(reply);
    draft.attempt_index = 0;
    draft.provenance = PoCDraft::Provenance::Generated;
    return draft;
}

PostCheck markers_post_check(const DVPlan& plan)
{
    auto required = std::make_shared<std::vector<std::string>>();
    for (const auto& step : plan.state_queries)
        required->push_back(step.query_id());

    return [required](const ExecutionOutcome& outcome) -> std::optional<Diagnostics> {
        MarkerScan scan = parse_markers(outcome.logs);
        std::vector<std::string> missing;
        for (const auto& id : *required) {
            if (!scan.pre.find(id))
                missing.push_back("PRE marker for " + id);
            if (!scan.post.find(id))
                missing.push_back("POST marker for " + id);
        }
        if (scan.trigger_count == 0)
            missing.push_back("TRIGGER marker");
        if (missing.empty())
            return std::nullopt;

        Diagnostics d;
        d.phase = Diagnostics::Phase::Runtime;
        d.success = false;
        d.raw = "instrumented run is missing required markers: " + join(missing, "; ") +
                ". Every marker must be logged as SMARTPOC|<PRE|TRIGGER|POST>|<id>|<value>.";
        for (const auto& m : missing)
            d.items.push_back({m, "", -1});
        return d;
    };
}

Verdict render_verdict(const Finding& f, const DVPlan& plan, const StateSnapshot& pre,
                       const StateSnapshot& post, const std::vector<Delta>& deltas,
                       LlmGateway& llm)
{
    Verdict verdict;
    verdict.pre = pre;
    verdict.post = post;
    verdict.deltas = deltas;

    if (deltas.empty()) {
        verdict.decision = Verdict::Decision::NotValidated;
        verdict.reason = "no state delta observed between pre and post snapshots";
        return verdict;
    }

    std::string user_text = "## Finding\n";
    user_text += f.narrative.empty() ? f.vuln_type : f.narrative;
    user_text += "\n\n## Verification plan\n";
    if (!plan.rationale.empty())
        user_text += "Rationale: " + plan.rationale + "\n";
    if (!plan.expected_direction.empty())
        user_text += "Expected change: " + plan.expected_direction + "\n";
    user_text += "\n## Observed state deltas\n";
    for (const auto& delta : deltas)
        user_text += "- " + delta.query_id + ": \"" + delta.before + "\" -> \"" + delta.after +
                     "\"\n";
    user_text += "\n## Instructions\n"
                 "Do these deltas demonstrate the reported vulnerability? Reply with "
                 "VALIDATED or NOT VALIDATED on the first line, then one sentence of "
                 "justification.\n";

    PromptPayload payload;
    payload.system_text = "You judge whether observed on-chain state changes demonstrate a "
                          "reported smart-contract vulnerability.";
    payload.user_text = user_text;
    payload.stage = "dv-verify";
    payload.finding_id = f.id;

    LlmReply reply;
    try {
        reply = llm.complete(payload);
    } catch (const TransportError& e) {
        throw StageError("dv-verify", e.what());
    }

    verdict.llm_assessment = reply.text;
    verdict.cost.llm_calls = 1;

    std::string trimmed = trim(reply.text);
    if (trimmed.empty()) {
        verdict.decision = Verdict::Decision::NotValidated;
        verdict.reason = "assessment reply was empty";
    } else if (starts_with(upper(trimmed), "VALIDATED")) {
        verdict.decision = Verdict::Decision::Validated;
        verdict.reason = "state deltas observed and assessment affirmed";
    } else {
        verdict.decision = Verdict::Decision::NotValidated;
        verdict.reason = "assessment did not affirm: " + first_line_of(trimmed);
    }
    return verdict;
}

Verdict run_dv(const Finding& f, const BugContextBundle& bundle, Workspace& ws,
               const EngineConfig& config, const EngineResult& gre, LlmGateway& llm,
               Executor& executor, const std::filesystem::path& artifacts_dir)
{
    if (!gre.ok())
        throw StageError("dv-extract", "verification requires a passing proof of concept");
    fs::create_directories(artifacts_dir);

    Verdict verdict;
    DVPlan plan = extract_plan(f, gre.final_draft, bundle.abi, llm);
    verdict.cost.llm_calls = 1;

    nlohmann::ordered_json plan_json;
    plan_json["action"] = nlohmann::ordered_json::array();
    for (const auto& step : plan.action)
        plan_json["action"].push_back(step.callable.signature());
    plan_json["state_queries"] = nlohmann::ordered_json::array();
    for (const auto& step : plan.state_queries)
        plan_json["state_queries"].push_back(step.callable.signature());
    plan_json["rationale"] = plan.rationale;
    plan_json["expected_direction"] = plan.expected_direction;
    plan_json["dropped"] = plan.dropped;
    write_file((artifacts_dir / "plan.json").string(), plan_json.dump(2) + "\n");

    if (!plan.usable()) {
        verdict.decision = Verdict::Decision::NotValidated;
        std::string gap = plan.action.empty() && plan.state_queries.empty()
                              ? "no action and no state queries"
                          : plan.action.empty() ? "no action"
                                                : "no state queries";
        verdict.reason = "verification plan unusable after ABI filtering (" + gap + ")";
        if (!plan.dropped.empty())
            verdict.reason += "; dropped: " + join(plan.dropped, ", ");
        return verdict;
    }

    PoCDraft instrumented = insert_instrumentation(f, gre.final_draft, plan, bundle, llm);
    ++verdict.cost.llm_calls;

    EngineResult engine =
        run_engine_from_draft(f, bundle, ws, config, llm, executor,
                              artifacts_dir / "instrumented", instrumented, "dv-insert",
                              markers_post_check(plan));
    verdict.cost.llm_calls += engine.generation_calls;
    verdict.cost.engine_attempts = engine.attempts_used;

    if (!engine.ok()) {
        verdict.decision = Verdict::Decision::GenerationFailed;
        verdict.reason = "instrumented test never executed cleanly: " +
                         first_line_of(engine.last_diagnostics.raw);
        return verdict;
    }

    MarkerScan scan = parse_markers(engine.outcome.logs);
    verdict.pre = scan.pre;
    verdict.post = scan.post;
    verdict.marker_lines = scan.marker_lines;

    if (!scan.issues.empty()) {
        verdict.decision = Verdict::Decision::NotValidated;
        verdict.reason = "marker parse issues: " + join(scan.issues, "; ");
        return verdict;
    }

    DiffResult diff = diff_snapshots(scan.pre, scan.post);
    if (diff.mismatch) {
        verdict.decision = Verdict::Decision::NotValidated;
        verdict.reason = *diff.mismatch;
        return verdict;
    }

    Verdict assessed = render_verdict(f, plan, scan.pre, scan.post, diff.deltas, llm);
    assessed.marker_lines = scan.marker_lines;
    assessed.cost.llm_calls += verdict.cost.llm_calls;
    assessed.cost.engine_attempts = verdict.cost.engine_attempts;
    return assessed;
}

} // namespace smartpoc
