#pragma once

#include "smartpoc/dv.hpp"
#include "smartpoc/findings.hpp"
#include "smartpoc/llm.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace smartpoc {

struct MetricCounts {
    long tp = 0;
    long tn = 0;
    long fp = 0;
    long fn = 0;

    long total() const { return tp + tn + fp + fn; }
};

/// (TP+TN)/total. No observations (or a negative count) is an error, not
/// a number.
double accuracy(const MetricCounts& c);

struct PpvNpv {
    std::optional<double> ppv; // TP/(TP+FP); empty when TP+FP == 0
    std::optional<double> npv; // TN/(TN+FN); empty when TN+FN == 0
};

PpvNpv ppv_npv(const MetricCounts& c);

/// Ratio rendered as a percentage with two decimals, e.g. "85.61%".
std::string format_percent(double ratio);

/// One report row per finding. `error` carries the stage failure text when
/// the pipeline recorded one (the decision is still present; stage errors
/// surface as GenerationFailed).
struct VerdictRow {
    std::string finding_id;
    std::string vuln_type;
    Verdict::Decision decision = Verdict::Decision::NotValidated;
    std::string reason;
    std::optional<bool> label;
    int llm_calls = 0;
    int engine_attempts = 0;
    std::string error;
};

struct RunReport {
    std::vector<VerdictRow> rows;
    std::optional<MetricCounts> counts; // set when any row carries a label
    std::optional<double> accuracy_ratio;
    PpvNpv rates;
    std::map<std::string, StageTotals> stage_costs;
    StageTotals total_cost;
    nlohmann::ordered_json machine; // full machine-readable document
    std::string human_summary;
};

/// Fold one finding's verdict into a report row (label and type tag come
/// from the finding, costs from the verdict).
VerdictRow make_row(const Finding& f, const Verdict& v, std::string error = "");

/// Build the run report: one row per finding (cardinality must match),
/// confusion counts over labeled findings (Validated is the positive
/// prediction; GenerationFailed counts as negative), per-stage cost totals
/// from the ledger. Writes the machine-readable document to `out_file`
/// when non-empty; the human summary is returned for the caller to print.
RunReport emit_report(const std::vector<Finding>& findings,
                      const std::vector<VerdictRow>& rows, const CostLedger& ledger,
                      const std::filesystem::path& out_file,
                      const nlohmann::ordered_json& config_echo = nlohmann::ordered_json());

} // namespace smartpoc
