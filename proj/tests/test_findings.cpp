#include "smartpoc/findings.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/solidity_model.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace smartpoc;
using testsupport::TempDir;

namespace {

const char* kBankSource = "pragma solidity ^0.8.0;\n"    // 1
                          "contract Bank {\n"            // 2
                          "    uint256 public pool;\n"   // 3
                          "    function deposit() public payable {\n" // 4
                          "        pool += msg.value;\n" // 5
                          "    }\n"                      // 6
                          "    function withdraw(uint256 amount) public {\n" // 7
                          "        pool -= amount;\n"    // 8
                          "        payable(msg.sender).transfer(amount);\n"  // 9
                          "    }\n"                      // 10
                          "}\n";                         // 11

SourceModel bank_model(const TempDir& dir)
{
    dir.write("src/Bank.sol", kBankSource);
    return parse_project(dir.str());
}

Finding make_finding(std::string id)
{
    Finding f;
    f.id = std::move(id);
    f.tool = "fixture";
    f.narrative = "withdraw sends funds before accounting";
    f.severity_text = "High";
    f.severity = Severity::High;
    return f;
}

} // namespace

TEST(Findings, EmptyFileYieldsEmptyCorpus)
{
    TempDir dir;
    auto path = dir.write("findings.jsonl", "");
    auto corpus = load_findings(path, FindingsFormat::NativeJson);
    EXPECT_TRUE(corpus.items.empty());
}

TEST(Findings, RoundTripPreservesSeverityAndRawLocations)
{
    TempDir dir;
    auto path = dir.write(
        "findings.jsonl",
        R"({"id": "f1", "tool": "slither", "project_ref": "p", "narrative": "a", "severity": "High", "locations": ["withdraw"]})"
        "\n"
        R"({"id": "f2", "tool": "mythril", "project_ref": "p", "narrative": "b", "severity": "Medium", "locations": [{"file": "src/Bank.sol", "line": 8}]})"
        "\n"
        R"({"id": "f3", "tool": "ccc", "project_ref": "p", "narrative": "c", "severity": "critical", "label": true})"
        "\n");
    auto corpus = load_findings(path, FindingsFormat::NativeJson);
    ASSERT_EQ(corpus.items.size(), 3u);
    EXPECT_EQ(corpus.items[0].severity, Severity::High);
    EXPECT_EQ(corpus.items[1].severity, Severity::Other);
    EXPECT_EQ(corpus.items[1].severity_text, "Medium");
    EXPECT_EQ(corpus.items[2].severity, Severity::High);
    ASSERT_EQ(corpus.items[1].locations.size(), 1u);
    EXPECT_EQ(corpus.items[1].locations[0].kind, FindingLocation::Kind::FileLine);
    EXPECT_EQ(corpus.items[1].locations[0].describe(), "src/Bank.sol:8");
    ASSERT_TRUE(corpus.items[2].label.has_value());
    EXPECT_TRUE(*corpus.items[2].label);
    EXPECT_FALSE(corpus.items[0].label.has_value());
}

TEST(Findings, DuplicateIdErrorNamesTheId)
{
    TempDir dir;
    auto path = dir.write("findings.jsonl",
                          R"({"id": "dup", "severity": "High"})"
                          "\n"
                          R"({"id": "dup", "severity": "High"})"
                          "\n");
    try {
        load_findings(path, FindingsFormat::NativeJson);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
        EXPECT_EQ(e.line(), 2);
    }
}

TEST(Findings, MalformedRecordNamesLineAndField)
{
    TempDir dir;
    auto path = dir.write("findings.jsonl",
                          R"({"id": "ok", "severity": "High"})"
                          "\n"
                          "{not json}\n");
    try {
        load_findings(path, FindingsFormat::NativeJson);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
    }

    auto path2 = dir.write("missing.jsonl", R"({"severity": "High"})"
                                            "\n");
    try {
        load_findings(path2, FindingsFormat::NativeJson);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("id"), std::string::npos);
    }
}

TEST(Findings, UnknownFormatIsConfigError)
{
    EXPECT_THROW(parse_findings_format("sarif"), ConfigError);
    EXPECT_EQ(parse_findings_format("native-json"), FindingsFormat::NativeJson);
    EXPECT_EQ(parse_findings_format("slither-json"), FindingsFormat::SlitherJson);
}

TEST(Findings, SlitherAdapterMapsDetectorResults)
{
    TempDir dir;
    auto path = dir.write("report.json", R"({
  "success": true,
  "results": {
    "detectors": [
      {
        "check": "reentrancy-eth",
        "impact": "High",
        "confidence": "Medium",
        "description": "Reentrancy in Bank.withdraw",
        "elements": [
          {"type": "contract", "name": "Bank"},
          {"type": "function", "name": "withdraw",
           "source_mapping": {"filename_relative": "src/Bank.sol", "lines": [7, 8, 9]}}
        ]
      },
      {
        "check": "pragma",
        "impact": "Informational",
        "description": "Version constraint",
        "elements": [
          {"type": "pragma", "name": "^0.8.0",
           "source_mapping": {"filename_relative": "src/Bank.sol", "lines": [1]}}
        ]
      }
    ]
  }
})");
    auto corpus = load_findings(path, FindingsFormat::SlitherJson);
    ASSERT_EQ(corpus.items.size(), 2u);
    const auto& first = corpus.items[0];
    EXPECT_EQ(first.id, "slither-1");
    EXPECT_EQ(first.tool, "slither");
    EXPECT_EQ(first.severity, Severity::High);
    EXPECT_EQ(first.vuln_type, "reentrancy-eth");
    EXPECT_EQ(first.narrative, "Reentrancy in Bank.withdraw");
    ASSERT_EQ(first.locations.size(), 1u);
    EXPECT_EQ(first.locations[0].describe(), "withdraw");
    // no function element: falls back to the first source mapping
    const auto& second = corpus.items[1];
    EXPECT_EQ(second.severity, Severity::Other);
    ASSERT_EQ(second.locations.size(), 1u);
    EXPECT_EQ(second.locations[0].describe(), "src/Bank.sol:1");
}

TEST(Findings, HighSeverityFilterKeepsFieldsIntact)
{
    TempDir dir;
    auto path = dir.write(
        "findings.jsonl",
        R"({"id": "keep", "narrative": "n", "severity": "HIGH", "locations": ["withdraw"]})"
        "\n"
        R"({"id": "drop", "narrative": "n", "severity": "Low"})"
        "\n");
    auto corpus = load_findings(path, FindingsFormat::NativeJson);
    auto high = filter_high_severity(corpus);
    ASSERT_EQ(high.items.size(), 1u);
    EXPECT_EQ(high.items[0].id, "keep");
    EXPECT_EQ(high.items[0].narrative, corpus.items[0].narrative);
    EXPECT_EQ(high.items[0].severity_text, corpus.items[0].severity_text);
    ASSERT_EQ(high.items[0].locations.size(), 1u);
    EXPECT_EQ(high.items[0].locations[0].describe(), "withdraw");
}

TEST(Findings, NormalizeResolvesLineToEnclosingFunction)
{
    TempDir dir;
    auto model = bank_model(dir);
    Finding f = make_finding("line-loc");
    f.locations.push_back(FindingLocation::file_line("src/Bank.sol", 8));
    auto normalized = normalize_finding(f, model);
    ASSERT_EQ(normalized.locations.size(), 1u);
    EXPECT_EQ(normalized.locations[0].kind, FindingLocation::Kind::FunctionName);
    EXPECT_EQ(normalized.locations[0].function_name, "withdraw");
}

TEST(Findings, NormalizeSubstitutesTypeNameForEmptyNarrative)
{
    TempDir dir;
    auto model = bank_model(dir);
    Finding f = make_finding("empty-narrative");
    f.narrative = "";
    f.vuln_type = "reentrancy";
    f.locations.push_back(FindingLocation::name("withdraw"));
    auto normalized = normalize_finding(f, model);
    EXPECT_EQ(normalized.narrative, "reentrancy");
}

TEST(Findings, NormalizeKeepsValidNameUnchanged)
{
    TempDir dir;
    auto model = bank_model(dir);
    Finding f = make_finding("name-loc");
    f.locations.push_back(FindingLocation::name("withdraw"));
    auto normalized = normalize_finding(f, model);
    ASSERT_EQ(normalized.locations.size(), 1u);
    EXPECT_EQ(normalized.locations[0].function_name, "withdraw");
}

TEST(Findings, NormalizeIsIdempotent)
{
    TempDir dir;
    auto model = bank_model(dir);
    Finding f = make_finding("idem");
    f.narrative = "";
    f.vuln_type = "access-control";
    f.locations.push_back(FindingLocation::file_line("src/Bank.sol", 5));
    f.locations.push_back(FindingLocation::name("withdraw"));
    auto once = normalize_finding(f, model);
    auto twice = normalize_finding(once, model);
    EXPECT_EQ(once.narrative, twice.narrative);
    ASSERT_EQ(once.locations.size(), twice.locations.size());
    for (std::size_t i = 0; i < once.locations.size(); ++i)
        EXPECT_EQ(once.locations[i].describe(), twice.locations[i].describe());
}

TEST(Findings, NormalizeRejectsUnresolvableLocations)
{
    TempDir dir;
    auto model = bank_model(dir);

    Finding bogus_name = make_finding("bogus-name");
    bogus_name.locations.push_back(FindingLocation::name("noSuchFunction"));
    try {
        normalize_finding(bogus_name, model);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_NE(std::string(e.what()).find("noSuchFunction"), std::string::npos);
    }

    Finding outside = make_finding("outside-line");
    outside.locations.push_back(FindingLocation::file_line("src/Bank.sol", 3));
    EXPECT_THROW(normalize_finding(outside, model), StageError);

    Finding bad_file = make_finding("bad-file");
    bad_file.locations.push_back(FindingLocation::file_line("src/Missing.sol", 5));
    EXPECT_THROW(normalize_finding(bad_file, model), StageError);

    Finding no_text = make_finding("no-text");
    no_text.narrative = "";
    no_text.vuln_type = "";
    EXPECT_THROW(normalize_finding(no_text, model), StageError);
}

TEST(Findings, NormalizeCorpusSplitsAcceptedAndRejected)
{
    TempDir dir;
    auto model = bank_model(dir);
    FindingCorpus corpus;
    Finding good = make_finding("good");
    good.locations.push_back(FindingLocation::name("deposit"));
    Finding bad = make_finding("bad");
    bad.locations.push_back(FindingLocation::name("ghost"));
    corpus.items = {good, bad};
    corpus.rebuild_index();

    auto result = normalize_corpus(corpus, model);
    ASSERT_EQ(result.accepted.items.size(), 1u);
    EXPECT_EQ(result.accepted.items[0].id, "good");
    ASSERT_EQ(result.rejected.size(), 1u);
    EXPECT_EQ(result.rejected[0].finding.id, "bad");
    EXPECT_NE(result.rejected[0].reason.find("ghost"), std::string::npos);
}

TEST(Findings, NormalizeDeduplicatesLocations)
{
    TempDir dir;
    auto model = bank_model(dir);
    Finding f = make_finding("dedupe");
    f.locations.push_back(FindingLocation::name("withdraw"));
    f.locations.push_back(FindingLocation::file_line("src/Bank.sol", 9));
    auto normalized = normalize_finding(f, model);
    ASSERT_EQ(normalized.locations.size(), 1u);
    EXPECT_EQ(normalized.locations[0].function_name, "withdraw");
}

TEST(Findings, NormalizeMatchesFileBySuffix)
{
    TempDir dir;
    auto model = bank_model(dir);
    Finding f = make_finding("suffix");
    f.locations.push_back(FindingLocation::file_line("Bank.sol", 5));
    auto normalized = normalize_finding(f, model);
    ASSERT_EQ(normalized.locations.size(), 1u);
    EXPECT_EQ(normalized.locations[0].function_name, "deposit");
}
