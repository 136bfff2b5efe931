#include "smartpoc/metrics.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"

#include <cstdio>

namespace fs = std::filesystem;

namespace smartpoc {

namespace {

void require_counts(const MetricCounts& c)
{
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0)
        throw StageError("metrics", "confusion counts must be non-negative");
}

nlohmann::ordered_json totals_json(const StageTotals& t)
{
    return {{"calls", t.calls},
            {"input_tokens", t.input_tokens},
            {"output_tokens", t.output_tokens},
            {"seconds", t.seconds}};
}

std::string ratio_display(long numerator, long denominator)
{
    return std::to_string(numerator) + "/" + std::to_string(denominator);
}

} // namespace

double accuracy(const MetricCounts& c)
{
    require_counts(c);
    if (c.total() == 0)
        throw StageError("metrics", "accuracy undefined: no observations");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

PpvNpv ppv_npv(const MetricCounts& c)
{
    require_counts(c);
    PpvNpv out;
    if (c.tp + c.fp > 0)
        out.ppv = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tn + c.fn > 0)
        out.npv = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fn);
    return out;
}

std::string format_percent(double ratio)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", ratio * 100.0);
    return buf;
}

VerdictRow make_row(const Finding& f, const Verdict& v, std::string error)
{
    VerdictRow row;
    row.finding_id = f.id;
    row.vuln_type = f.vuln_type;
    row.decision = v.decision;
    row.reason = v.reason;
    row.label = f.label;
    row.llm_calls = v.cost.llm_calls;
    row.engine_attempts = v.cost.engine_attempts;
    row.error = std::move(error);
    return row;
}

RunReport emit_report(const std::vector<Finding>& findings,
                      const std::vector<VerdictRow>& rows, const CostLedger& ledger,
                      const std::filesystem::path& out_file,
                      const nlohmann::ordered_json& config_echo)
{
    if (findings.size() != rows.size())
        throw StageError("metrics",
                         "row cardinality mismatch: " + std::to_string(findings.size()) +
                             " findings vs " + std::to_string(rows.size()) + " rows");
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].finding_id != findings[i].id)
            throw StageError("metrics", "row " + std::to_string(i) + " is for '" +
                                            rows[i].finding_id + "' but the corpus has '" +
                                            findings[i].id + "'");

    RunReport report;
    report.rows = rows;
    report.stage_costs = ledger.by_stage();
    report.total_cost = ledger.total();

    MetricCounts counts;
    long labeled = 0;
    long validated = 0;
    long not_validated = 0;
    long generation_failed = 0;
    for (const auto& row : rows) {
        bool positive_prediction = row.decision == Verdict::Decision::Validated;
        switch (row.decision) {
        case Verdict::Decision::Validated:
            ++validated;
            break;
        case Verdict::Decision::NotValidated:
            ++not_validated;
            break;
        case Verdict::Decision::GenerationFailed:
            ++generation_failed;
            break;
        }
        if (!row.label.has_value())
            continue;
        ++labeled;
        if (*row.label)
            positive_prediction ? ++counts.tp : ++counts.fn;
        else
            positive_prediction ? ++counts.fp : ++counts.tn;
    }

    if (labeled > 0) {
        report.counts = counts;
        report.accuracy_ratio = accuracy(counts);
        report.rates = ppv_npv(counts);
    }

    auto by_finding = ledger.by_finding();

    nlohmann::ordered_json machine;
    machine["config"] = config_echo.is_null() ? nlohmann::ordered_json::object()
                                              : config_echo;
    machine["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        nlohmann::ordered_json r;
        r["finding"] = row.finding_id;
        if (!row.vuln_type.empty())
            r["vuln_type"] = row.vuln_type;
        r["decision"] = to_string(row.decision);
        r["reason"] = row.reason;
        if (row.label.has_value())
            r["label"] = *row.label;
        r["llm_calls"] = row.llm_calls;
        r["engine_attempts"] = row.engine_attempts;
        if (!row.error.empty())
            r["error"] = row.error;
        auto cost = by_finding.find(row.finding_id);
        if (cost != by_finding.end())
            r["tokens"] = totals_json(cost->second);
        machine["rows"].push_back(r);
    }

    machine["summary"] = {{"findings", rows.size()},
                          {"validated", validated},
                          {"not_validated", not_validated},
                          {"generation_failed", generation_failed}};

    if (report.counts) {
        nlohmann::ordered_json metrics;
        metrics["counts"] = {{"tp", counts.tp},
                             {"tn", counts.tn},
                             {"fp", counts.fp},
                             {"fn", counts.fn},
                             {"labeled", labeled}};
        metrics["accuracy"] = {{"ratio", *report.accuracy_ratio},
                               {"percent", format_percent(*report.accuracy_ratio)}};
        if (report.rates.ppv)
            metrics["ppv"] = {{"ratio", *report.rates.ppv},
                              {"percent", format_percent(*report.rates.ppv)}};
        else
            metrics["ppv"] = nullptr;
        if (report.rates.npv)
            metrics["npv"] = {{"ratio", *report.rates.npv},
                              {"percent", format_percent(*report.rates.npv)}};
        else
            metrics["npv"] = nullptr;
        machine["metrics"] = metrics;
    }

    bool any_type = false;
    for (const auto& row : rows)
        any_type = any_type || !row.vuln_type.empty();
    if (any_type) {
        std::map<std::string, std::pair<long, long>> by_type; // type -> (count, validated)
        for (const auto& row : rows) {
            auto& slot = by_type[row.vuln_type.empty() ? "(untyped)" : row.vuln_type];
            ++slot.first;
            if (row.decision == Verdict::Decision::Validated)
                ++slot.second;
        }
        machine["by_type"] = nlohmann::ordered_json::object();
        for (const auto& [type, slot] : by_type)
            machine["by_type"][type] = {{"findings", slot.first},
                                        {"validated", slot.second}};
    }

    nlohmann::ordered_json stages = nlohmann::ordered_json::object();
    for (const auto& [stage, totals] : report.stage_costs)
        stages[stage] = totals_json(totals);
    machine["costs"] = {{"stages", stages}, {"total", totals_json(report.total_cost)}};

    report.machine = machine;

    std::string summary;
    summary += "findings: " + std::to_string(rows.size()) +
               "  validated: " + std::to_string(validated) +
               "  not-validated: " + std::to_string(not_validated) +
               "  generation-failed: " + std::to_string(generation_failed) + "\n";
    if (report.counts) {
        summary += "accuracy: " + format_percent(*report.accuracy_ratio) + " (" +
                   ratio_display(counts.tp + counts.tn, counts.total()) + ")";
        if (report.rates.ppv)
            summary += "  ppv: " + format_percent(*report.rates.ppv) + " (" +
                       ratio_display(counts.tp, counts.tp + counts.fp) + ")";
        if (report.rates.npv)
            summary += "  npv: " + format_percent(*report.rates.npv) + " (" +
                       ratio_display(counts.tn, counts.tn + counts.fn) + ")";
        summary += "\n";
    }
    char cost_line[160];
    std::snprintf(cost_line, sizeof(cost_line),
                  "llm cost: %ld calls, %ld in / %ld out tokens, %.1f s\n",
                  report.total_cost.calls, report.total_cost.input_tokens,
                  report.total_cost.output_tokens, report.total_cost.seconds);
    summary += cost_line;
    report.human_summary = summary;

    if (!out_file.empty()) {
        if (out_file.has_parent_path())
            fs::create_directories(out_file.parent_path());
        write_file(out_file.string(), machine.dump(2) + "\n");
    }
    return report;
}

} // namespace smartpoc
