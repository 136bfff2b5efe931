#include "smartpoc/metrics.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace smartpoc;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

Finding labeled_finding(const std::string& id, std::optional<bool> label,
                        const std::string& type = "")
{
    Finding f;
    f.id = id;
    f.narrative = "finding " + id;
    f.vuln_type = type;
    f.label = label;
    return f;
}

Verdict verdict_of(Verdict::Decision decision, int llm_calls = 0)
{
    Verdict v;
    v.decision = decision;
    v.reason = "because";
    v.cost.llm_calls = llm_calls;
    return v;
}

CallRecord call(const std::string& finding, const std::string& stage, long in_tok,
                long out_tok, double seconds)
{
    CallRecord r;
    r.finding_id = finding;
    r.stage = stage;
    r.input_tokens = in_tok;
    r.output_tokens = out_tok;
    r.seconds = seconds;
    return r;
}

} // namespace

TEST(Metrics, AccuracyMatchesPublishedCounts)
{
    MetricCounts fix_set; // 119 correct of 139
    fix_set.tp = 100;
    fix_set.tn = 19;
    fix_set.fp = 12;
    fix_set.fn = 8;
    ASSERT_EQ(fix_set.total(), 139);
    EXPECT_NEAR(accuracy(fix_set), 0.8561, 0.0001);
    EXPECT_EQ(format_percent(accuracy(fix_set)), "85.61%");

    MetricCounts full_set; // 370 correct of 428
    full_set.tp = 300;
    full_set.tn = 70;
    full_set.fp = 30;
    full_set.fn = 28;
    ASSERT_EQ(full_set.total(), 428);
    EXPECT_NEAR(accuracy(full_set), 0.8645, 0.0001);
    EXPECT_EQ(format_percent(accuracy(full_set)), "86.45%");
}

TEST(Metrics, AccuracyZeroWhenNothingIsCorrect)
{
    MetricCounts c;
    c.fp = 3;
    c.fn = 2;
    EXPECT_DOUBLE_EQ(accuracy(c), 0.0);
}

TEST(Metrics, AccuracyUndefinedWithoutObservations)
{
    EXPECT_THROW(accuracy(MetricCounts{}), StageError);
}

TEST(Metrics, NegativeCountsAreRejected)
{
    MetricCounts c;
    c.tp = -1;
    c.tn = 5;
    EXPECT_THROW(accuracy(c), StageError);
    EXPECT_THROW(ppv_npv(c), StageError);
}

TEST(Metrics, PpvNpvMatchPublishedCounts)
{
    MetricCounts c;
    c.tp = 33;
    c.fp = 2;
    c.tn = 30;
    c.fn = 5;
    auto rates = ppv_npv(c);
    ASSERT_TRUE(rates.ppv.has_value());
    ASSERT_TRUE(rates.npv.has_value());
    EXPECT_NEAR(*rates.ppv, 0.9429, 0.0001);
    EXPECT_NEAR(*rates.npv, 0.8571, 0.0001);
    EXPECT_EQ(format_percent(*rates.ppv), "94.29%");
    EXPECT_EQ(format_percent(*rates.npv), "85.71%");
}

TEST(Metrics, ZeroDenominatorLeavesThatSideUndefined)
{
    MetricCounts c;
    c.tn = 4;
    c.fn = 1;
    auto rates = ppv_npv(c);
    EXPECT_FALSE(rates.ppv.has_value());
    ASSERT_TRUE(rates.npv.has_value());
    EXPECT_DOUBLE_EQ(*rates.npv, 0.8);
}

TEST(Metrics, FormatPercentUsesTwoDecimals)
{
    EXPECT_EQ(format_percent(119.0 / 139.0), "85.61%");
    EXPECT_EQ(format_percent(370.0 / 428.0), "86.45%");
    EXPECT_EQ(format_percent(1.0), "100.00%");
    EXPECT_EQ(format_percent(0.0), "0.00%");
}

TEST(Metrics, MakeRowCopiesFindingAndVerdictFields)
{
    auto f = labeled_finding("f9", true, "access-control");
    Verdict v = verdict_of(Verdict::Decision::Validated, 4);
    v.cost.engine_attempts = 2;
    auto row = make_row(f, v, "");
    EXPECT_EQ(row.finding_id, "f9");
    EXPECT_EQ(row.vuln_type, "access-control");
    EXPECT_EQ(row.decision, Verdict::Decision::Validated);
    EXPECT_EQ(row.reason, "because");
    ASSERT_TRUE(row.label.has_value());
    EXPECT_TRUE(*row.label);
    EXPECT_EQ(row.llm_calls, 4);
    EXPECT_EQ(row.engine_attempts, 2);
    EXPECT_TRUE(row.error.empty());
}

TEST(Metrics, ReportHasOneRowPerFinding)
{
    TempDir dir;
    std::vector<Finding> findings = {labeled_finding("a", std::nullopt),
                                     labeled_finding("b", std::nullopt),
                                     labeled_finding("c", std::nullopt)};
    std::vector<VerdictRow> rows;
    for (const auto& f : findings)
        rows.push_back(make_row(f, verdict_of(Verdict::Decision::NotValidated)));

    CostLedger ledger;
    auto report = emit_report(findings, rows, ledger, dir.path() / "report.json");
    EXPECT_EQ(report.rows.size(), 3u);
    EXPECT_EQ(report.machine["rows"].size(), 3u);
    EXPECT_FALSE(report.counts.has_value());
    EXPECT_FALSE(report.machine.contains("metrics"));

    rows.pop_back();
    EXPECT_THROW(emit_report(findings, rows, ledger, ""), StageError);

    rows.push_back(make_row(labeled_finding("zzz", std::nullopt),
                            verdict_of(Verdict::Decision::NotValidated)));
    EXPECT_THROW(emit_report(findings, rows, ledger, ""), StageError);
}

TEST(Metrics, BenchmarkModeComputesAccuracyFromLabels)
{
    TempDir dir;
    std::vector<Finding> findings = {labeled_finding("v1", true),
                                     labeled_finding("v2", true),
                                     labeled_finding("p1", false)};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::Validated)),
        make_row(findings[1], verdict_of(Verdict::Decision::Validated)),
        make_row(findings[2], verdict_of(Verdict::Decision::NotValidated)),
    };
    CostLedger ledger;
    auto report = emit_report(findings, rows, ledger, dir.path() / "report.json");

    ASSERT_TRUE(report.counts.has_value());
    EXPECT_EQ(report.counts->tp, 2);
    EXPECT_EQ(report.counts->tn, 1);
    EXPECT_EQ(report.counts->total(), 3);
    ASSERT_TRUE(report.accuracy_ratio.has_value());
    EXPECT_DOUBLE_EQ(*report.accuracy_ratio, 1.0);
    EXPECT_EQ(report.machine["metrics"]["accuracy"]["percent"], "100.00%");
    EXPECT_NE(report.human_summary.find("accuracy: 100.00% (3/3)"), std::string::npos);
}

TEST(Metrics, GenerationFailedCountsAsNegativePrediction)
{
    std::vector<Finding> findings = {labeled_finding("v", true),
                                     labeled_finding("p", false)};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::GenerationFailed)),
        make_row(findings[1], verdict_of(Verdict::Decision::GenerationFailed)),
    };
    CostLedger ledger;
    auto report = emit_report(findings, rows, ledger, "");
    ASSERT_TRUE(report.counts.has_value());
    EXPECT_EQ(report.counts->fn, 1); // vulnerable but predicted negative
    EXPECT_EQ(report.counts->tn, 1); // patched and predicted negative
    EXPECT_EQ(report.counts->tp, 0);
    EXPECT_EQ(report.counts->fp, 0);
}

TEST(Metrics, UnlabeledRowsStayOutOfTheCounts)
{
    std::vector<Finding> findings = {labeled_finding("v", true),
                                     labeled_finding("u", std::nullopt)};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::Validated)),
        make_row(findings[1], verdict_of(Verdict::Decision::Validated)),
    };
    CostLedger ledger;
    auto report = emit_report(findings, rows, ledger, "");
    ASSERT_TRUE(report.counts.has_value());
    EXPECT_EQ(report.counts->total(), 1);
    EXPECT_EQ(report.counts->tp, 1);
    EXPECT_EQ(report.machine["metrics"]["counts"]["labeled"], 1);
}

TEST(Metrics, LedgerTotalsEqualStageSums)
{
    TempDir dir;
    CostLedger ledger;
    ledger.record(call("a", "bce-keys", 100, 10, 0.5));
    ledger.record(call("a", "gre-generate", 200, 50, 1.0));
    ledger.record(call("b", "gre-generate", 300, 60, 1.5));
    ledger.record(call("b", "dv-verify", 50, 5, 0.25));

    std::vector<Finding> findings = {labeled_finding("a", std::nullopt),
                                     labeled_finding("b", std::nullopt)};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::Validated, 2)),
        make_row(findings[1], verdict_of(Verdict::Decision::NotValidated, 2)),
    };
    auto report = emit_report(findings, rows, ledger, dir.path() / "report.json");

    long stage_in = 0;
    long stage_calls = 0;
    for (const auto& [stage, totals] : report.stage_costs) {
        stage_in += totals.input_tokens;
        stage_calls += totals.calls;
    }
    EXPECT_EQ(stage_in, report.total_cost.input_tokens);
    EXPECT_EQ(stage_calls, report.total_cost.calls);
    EXPECT_EQ(report.total_cost.input_tokens, 650);
    EXPECT_EQ(report.total_cost.calls, 4);

    EXPECT_EQ(report.machine["costs"]["total"]["input_tokens"], 650);
    EXPECT_EQ(report.machine["costs"]["stages"]["gre-generate"]["input_tokens"], 500);
    EXPECT_EQ(report.machine["rows"][0]["tokens"]["input_tokens"], 300);
    EXPECT_EQ(report.machine["rows"][1]["tokens"]["input_tokens"], 350);
}

TEST(Metrics, MachineReportKeepsFullPrecisionRatios)
{
    TempDir dir;
    std::vector<Finding> findings;
    std::vector<VerdictRow> rows;
    // 119 correct of 139: 100 TP + 19 TN, 12 FP, 8 FN
    auto add = [&](const std::string& id, bool label, Verdict::Decision d) {
        findings.push_back(labeled_finding(id + std::to_string(findings.size()), label));
        rows.push_back(make_row(findings.back(), verdict_of(d)));
    };
    for (int i = 0; i < 100; ++i)
        add("tp", true, Verdict::Decision::Validated);
    for (int i = 0; i < 19; ++i)
        add("tn", false, Verdict::Decision::NotValidated);
    for (int i = 0; i < 12; ++i)
        add("fp", false, Verdict::Decision::Validated);
    for (int i = 0; i < 8; ++i)
        add("fn", true, Verdict::Decision::NotValidated);

    CostLedger ledger;
    auto out = dir.path() / "report.json";
    auto report = emit_report(findings, rows, ledger, out);
    EXPECT_EQ(report.machine["metrics"]["accuracy"]["percent"], "85.61%");
    double ratio = report.machine["metrics"]["accuracy"]["ratio"].get<double>();
    EXPECT_DOUBLE_EQ(ratio, 119.0 / 139.0); // full precision, not the display rounding

    auto reloaded = nlohmann::json::parse(read_file(out.string()));
    EXPECT_DOUBLE_EQ(reloaded["metrics"]["accuracy"]["ratio"].get<double>(), 119.0 / 139.0);
}

TEST(Metrics, ReportIsDeterministic)
{
    TempDir dir;
    std::vector<Finding> findings = {labeled_finding("a", true, "access-control"),
                                     labeled_finding("b", false, "reentrancy")};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::Validated, 6)),
        make_row(findings[1], verdict_of(Verdict::Decision::NotValidated, 5)),
    };
    CostLedger ledger;
    ledger.record(call("a", "bce-keys", 10, 1, 0.1));

    auto first = emit_report(findings, rows, ledger, dir.path() / "r1.json");
    auto second = emit_report(findings, rows, ledger, dir.path() / "r2.json");
    EXPECT_EQ(first.machine.dump(), second.machine.dump());
    EXPECT_EQ(first.human_summary, second.human_summary);
    EXPECT_EQ(read_file((dir.path() / "r1.json").string()),
              read_file((dir.path() / "r2.json").string()));
}

TEST(Metrics, TypeBreakdownAppearsWhenFindingsCarryTags)
{
    std::vector<Finding> findings = {labeled_finding("a", true, "access-control"),
                                     labeled_finding("b", true, "access-control"),
                                     labeled_finding("c", false, "reentrancy")};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::Validated)),
        make_row(findings[1], verdict_of(Verdict::Decision::NotValidated)),
        make_row(findings[2], verdict_of(Verdict::Decision::NotValidated)),
    };
    CostLedger ledger;
    auto report = emit_report(findings, rows, ledger, "");
    ASSERT_TRUE(report.machine.contains("by_type"));
    EXPECT_EQ(report.machine["by_type"]["access-control"]["findings"], 2);
    EXPECT_EQ(report.machine["by_type"]["access-control"]["validated"], 1);
    EXPECT_EQ(report.machine["by_type"]["reentrancy"]["findings"], 1);
}

TEST(Metrics, HumanSummaryNamesTheRates)
{
    std::vector<Finding> findings = {labeled_finding("a", true),
                                     labeled_finding("b", false),
                                     labeled_finding("c", false)};
    std::vector<VerdictRow> rows = {
        make_row(findings[0], verdict_of(Verdict::Decision::Validated)),
        make_row(findings[1], verdict_of(Verdict::Decision::Validated)),
        make_row(findings[2], verdict_of(Verdict::Decision::NotValidated)),
    };
    CostLedger ledger;
    auto report = emit_report(findings, rows, ledger, "");
    EXPECT_NE(report.human_summary.find("findings: 3"), std::string::npos);
    EXPECT_NE(report.human_summary.find("validated: 2"), std::string::npos);
    EXPECT_NE(report.human_summary.find("ppv: 50.00% (1/2)"), std::string::npos);
    EXPECT_NE(report.human_summary.find("npv: 100.00% (1/1)"), std::string::npos);
    EXPECT_NE(report.human_summary.find("llm cost:"), std::string::npos);
}
