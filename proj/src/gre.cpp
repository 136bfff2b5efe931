#include "smartpoc/gre.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;

namespace smartpoc {

const char* const kOneShotExemplar =
    R"(pragma solidity 0.8.19;

import "forge-std/Test.sol";
import "../src/Example.sol";

contract ExamplePoC is Test {
    Example target;
    address attacker = address(0xBEEF);

    function setUp() public {
        target = new Example();
        vm.deal(attacker, 1 ether);
    }

    function test_exploit() public {
        uint256 balanceBefore = target.balanceOf(attacker);
        vm.startPrank(attacker);
        target.vulnerableEntryPoint();
        vm.stopPrank();
        assertGt(target.balanceOf(attacker), balanceBefore);
    }
}
)";

namespace {

bool ident_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool keyword_at(const std::string& text, std::size_t pos, const std::string& word)
{
    if (text.compare(pos, word.size(), word) != 0)
        return false;
    bool left = pos == 0 || !ident_char(text[pos - 1]);
    std::size_t after = pos + word.size();
    bool right = after >= text.size() || !ident_char(text[after]);
    return left && right;
}

struct Span {
    std::size_t begin = std::string::npos;
    std::size_t end = 0; // one past the ';'
    bool found() const { return begin != std::string::npos; }
};

/// All `pragma <second_word> ... ;` directives, in order.
std::vector<Span> find_pragmas(const std::string& masked, const std::string& second_word)
{
    std::vector<Span> spans;
    std::size_t pos = 0;
    while ((pos = masked.find("pragma", pos)) != std::string::npos) {
        if (!keyword_at(masked, pos, "pragma")) {
            pos += 6;
            continue;
        }
        std::size_t cursor = pos + 6;
        while (cursor < masked.size() &&
               std::isspace(static_cast<unsigned char>(masked[cursor])))
            ++cursor;
        if (keyword_at(masked, cursor, second_word)) {
            auto semi = masked.find(';', cursor);
            if (semi != std::string::npos) {
                spans.push_back({pos, semi + 1});
                pos = semi + 1;
                continue;
            }
        }
        pos += 6;
    }
    return spans;
}

struct ImportDirective {
    std::size_t quote_open = 0;  // position of the opening quote in raw text
    std::size_t quote_close = 0; // position of the closing quote
};

std::vector<ImportDirective> find_imports(const std::string& raw, const std::string& masked)
{
    std::vector<ImportDirective> imports;
    std::size_t pos = 0;
    while ((pos = masked.find("import", pos)) != std::string::npos) {
        if (!keyword_at(masked, pos, "import")) {
            pos += 6;
            continue;
        }
        auto semi = masked.find(';', pos);
        if (semi == std::string::npos)
            break;
        // The path literal is masked out; locate its quotes in the raw text.
        std::size_t q1 = std::string::npos;
        for (std::size_t i = pos; i < semi; ++i) {
            if (raw[i] == '"' || raw[i] == '\'') {
                q1 = i;
                break;
            }
        }
        if (q1 != std::string::npos) {
            auto q2 = raw.find(raw[q1], q1 + 1);
            if (q2 != std::string::npos && q2 < semi)
                imports.push_back({q1, q2});
        }
        pos = semi + 1;
    }
    return imports;
}

std::string path_basename(const std::string& path)
{
    auto slash = path.find_last_of('/');
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

std::size_t line_end_after(std::string& text, std::size_t pos)
{
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) {
        text.push_back('\n');
        return text.size();
    }
    return nl + 1;
}

bool has_abiencoder_directive(const std::string& raw, const std::string& masked)
{
    for (const auto& span : find_pragmas(masked, "experimental"))
        if (raw.substr(span.begin, span.end - span.begin).find("ABIEncoderV2") !=
            std::string::npos)
            return true;
    return false;
}

/// Widens [begin, end) to swallow leading indentation and the trailing
/// line remainder, so a removed definition leaves no blank husk behind.
std::pair<std::size_t, std::size_t> widen_to_lines(const std::string& text, std::size_t begin,
                                                   std::size_t end)
{
    std::size_t line_start = begin;
    while (line_start > 0 && (text[line_start - 1] == ' ' || text[line_start - 1] == '\t'))
        --line_start;
    if (line_start == 0 || text[line_start - 1] == '\n')
        begin = line_start;
    std::size_t tail = end;
    while (tail < text.size() && (text[tail] == ' ' || text[tail] == '\t'))
        ++tail;
    if (tail < text.size() && text[tail] == '\n')
        end = tail + 1;
    else if (tail == text.size())
        end = tail;
    return {begin, end};
}

bool conflicts_with_catalog(const ScannedFunction& fn,
                            const std::vector<CatalogEntry>& catalog)
{
    static const std::vector<std::string> kNeverConflicts = {"constructor", "receive",
                                                             "fallback", "setUp"};
    if (std::find(kNeverConflicts.begin(), kNeverConflicts.end(), fn.simple_name) !=
        kNeverConflicts.end())
        return false;
    for (const auto& entry : catalog) {
        if (entry.simple_name == entry.contract || entry.simple_name == "constructor" ||
            entry.simple_name == "receive" || entry.simple_name == "fallback")
            continue;
        if (entry.simple_name == fn.simple_name && entry.parameter_types == fn.parameter_types)
            return true;
    }
    return false;
}

std::string phase_label(Diagnostics::Phase phase)
{
    return phase == Diagnostics::Phase::Compile ? "compile" : "runtime";
}

} // namespace

PromptPayload build_generation_prompt(
    const Finding& f, const BugContextBundle& bundle, const EngineConfig& config,
    const std::optional<std::pair<PoCDraft, Diagnostics>>& prev)
{
    std::ostringstream user;
    user << "## Project and build metadata\n";
    user << "Target contract: " << bundle.target_contract << " (" << bundle.target_file
         << ")\n";
    user << "Compiler version: " << bundle.build_metadata.compiler_version.value_or("(unknown)")
         << "\n";
    if (bundle.build_metadata.remappings.empty()) {
        user << "Remappings: (none)\n";
    } else {
        user << "Remappings:\n";
        for (const auto& r : bundle.build_metadata.remappings)
            user << "  " << r << "\n";
    }
    user << "Write one Foundry test contract named " << bundle.target_contract
         << "PoC in file test/" << bundle.target_contract << "PoC.t.sol.\n";
    user << "Import the target with: import \"../src/" << bundle.target_file << "\";\n";

    user << "\n## Finding\n";
    user << "Finding " << f.id;
    if (!f.tool.empty())
        user << " reported by " << f.tool;
    user << ":\n" << (f.narrative.empty() ? f.vuln_type : f.narrative) << "\n";

    user << "\n## Bug-related code\n" << bundle.assembled_text;
    if (!bundle.assembled_text.empty() && bundle.assembled_text.back() != '\n')
        user << "\n";

    user << "\n## Expected output format\n" << config.exemplar;
    if (!config.exemplar.empty() && config.exemplar.back() != '\n')
        user << "\n";

    if (prev) {
        user << "\n## Previous attempt " << prev->first.attempt_index << "\n";
        user << "```solidity\n" << prev->first.text;
        if (!prev->first.text.empty() && prev->first.text.back() != '\n')
            user << "\n";
        user << "```\n";
        user << "\n## Previous diagnostics (" << phase_label(prev->second.phase) << ")\n";
        user << prev->second.raw;
        if (!prev->second.raw.empty() && prev->second.raw.back() != '\n')
            user << "\n";
        user << "\nFix the problems shown in the diagnostics and reply with the complete "
                "corrected test file in a single ```solidity code block.\n";
    } else {
        user << "\nReply with the complete test file in a single ```solidity code block. "
                "The test must demonstrate the reported vulnerability and assert the "
                "effect of the exploit.\n";
    }

    PromptPayload payload;
    payload.system_text = "You write Foundry proof-of-concept tests that demonstrate "
                          "reported smart-contract vulnerabilities.";
    payload.user_text = user.str();
    payload.stage = prev ? "gre-repair" : "gre-generate";
    payload.finding_id = f.id;
    payload.temperature = config.temperature;
    return payload;
}

PoCDraft sanitize_draft(const PoCDraft& draft, const BugContextBundle& bundle)
{
    if (trim(draft.text).empty())
        throw StageError("gre-sanitize", "draft is empty");
    if (!has_contract_with_body(draft.text))
        throw StageError("gre-sanitize", "draft declares no contract with a body");
    if (!bundle.build_metadata.compiler_version)
        throw StageError("gre-sanitize", "bundle carries no compiler version");

    std::string text = draft.text;
    const std::string& version = *bundle.build_metadata.compiler_version;

    // (a) pragma aligned with the target compiler
    const std::string desired = "pragma solidity " + version + ";";
    {
        auto masked = mask_comments_and_strings(text);
        auto spans = find_pragmas(masked, "solidity");
        if (spans.empty())
            text.insert(0, desired + "\n");
        else if (text.compare(spans[0].begin, spans[0].end - spans[0].begin, desired) != 0)
            text.replace(spans[0].begin, spans[0].end - spans[0].begin, desired);
    }

    // (b) legacy ABI directive for pre-0.8 targets
    auto mm = version_major_minor(version);
    if (mm && mm->first == 0 && mm->second < 8) {
        auto masked = mask_comments_and_strings(text);
        if (!has_abiencoder_directive(text, masked)) {
            auto spans = find_pragmas(masked, "solidity");
            auto at = line_end_after(text, spans[0].end);
            text.insert(at, "pragma experimental ABIEncoderV2;\n");
        }
    }

    // (c) target import present and path-correct
    const std::string expected = "../src/" + bundle.target_file;
    const std::string target_base = path_basename(bundle.target_file);
    {
        auto masked = mask_comments_and_strings(text);
        auto imports = find_imports(text, masked);
        bool present = false;
        std::vector<ImportDirective> rewrites;
        for (const auto& imp : imports) {
            std::string path =
                text.substr(imp.quote_open + 1, imp.quote_close - imp.quote_open - 1);
            if (path == expected)
                present = true;
            else if (path_basename(path) == target_base)
                rewrites.push_back(imp);
        }
        for (auto it = rewrites.rbegin(); it != rewrites.rend(); ++it) {
            text.replace(it->quote_open + 1, it->quote_close - it->quote_open - 1, expected);
            present = true;
        }
        if (!present) {
            auto remasked = mask_comments_and_strings(text);
            auto pragma_spans = find_pragmas(remasked, "solidity");
            auto experimental = find_pragmas(remasked, "experimental");
            std::size_t anchor = pragma_spans[0].end;
            for (const auto& span : experimental)
                if (span.begin >= anchor)
                    anchor = std::max(anchor, span.end);
            auto at = line_end_after(text, anchor);
            text.insert(at, "import \"" + expected + "\";\n");
        }
    }

    // (d) definitions duplicating the target catalog removed
    {
        auto scanned = scan_function_definitions(text);
        std::vector<std::pair<std::size_t, std::size_t>> cuts;
        for (const auto& fn : scanned)
            if (conflicts_with_catalog(fn, bundle.target_catalog))
                cuts.push_back(widen_to_lines(text, fn.begin, fn.end));
        for (auto it = cuts.rbegin(); it != cuts.rend(); ++it)
            text.erase(it->first, it->second - it->first);
    }

    PoCDraft out;
    out.text = std::move(text);
    out.attempt_index = draft.attempt_index;
    out.provenance = PoCDraft::Provenance::Sanitized;
    return out;
}

namespace {

EngineResult engine_loop(const Finding& f, const BugContextBundle& bundle, const Workspace& ws,
                         const EngineConfig& config, LlmGateway& llm, Executor& executor,
                         const fs::path& artifacts_dir, std::optional<PoCDraft> initial,
                         const std::string& generate_stage, const std::string& repair_stage,
                         const PostCheck& post_check)
{
    if (config.retry_budget < 1)
        throw ConfigError("retry budget must be >= 1");

    EngineResult result;
    std::optional<std::pair<PoCDraft, Diagnostics>> prev;

    for (int k = 0; k < config.retry_budget; ++k) {
        auto attempt_dir = artifacts_dir / std::to_string(k);
        fs::create_directories(attempt_dir);

        PoCDraft raw;
        if (k == 0 && initial) {
            raw = *initial;
            raw.attempt_index = 0;
            raw.provenance = PoCDraft::Provenance::Carried;
        } else {
            auto payload = build_generation_prompt(f, bundle, config, prev);
            payload.stage = prev ? repair_stage : generate_stage;
            write_file((attempt_dir / "prompt.txt").string(),
                       "SYSTEM:\n" + payload.system_text + "\n\nUSER:\n" + payload.user_text);
            auto reply = llm.complete(payload);
            ++result.generation_calls;
            raw.text = extract_code_block(reply);
            raw.attempt_index = k;
            raw.provenance = PoCDraft::Provenance::Generated;
        }
        write_file((attempt_dir / "raw.sol").string(), raw.text);

        PoCDraft draft = raw;
        Diagnostics failure;
        bool rejected_early = false;
        try {
            draft = sanitize_draft(raw, bundle);
            draft.attempt_index = k;
            write_file((attempt_dir / "draft.sol").string(), draft.text);
            write_test(ws, draft.text);
        } catch (const StageError& e) {
            rejected_early = true;
            failure.phase = Diagnostics::Phase::Compile;
            failure.success = false;
            failure.raw = std::string("draft rejected before execution: ") + e.what();
            draft = raw;
        }

        if (!rejected_early) {
            auto outcome = execute(executor, ws);
            if (outcome.ok_compile && outcome.ok_run) {
                std::optional<Diagnostics> rejection;
                if (post_check)
                    rejection = post_check(outcome);
                if (!rejection) {
                    write_file((attempt_dir / "diagnostics.txt").string(), "success\n");
                    result.status = EngineResult::Status::Success;
                    result.final_draft = draft;
                    result.outcome = outcome;
                    result.attempts_used = k + 1;
                    return result;
                }
                failure = *rejection;
            } else {
                failure = outcome.ok_compile ? outcome.runtime_diag : outcome.compile_diag;
            }
        }

        write_file((attempt_dir / "diagnostics.txt").string(),
                   phase_label(failure.phase) + "\n" + failure.raw + "\n");
        prev = std::make_pair(draft, failure);
        result.last_diagnostics = failure;
    }

    result.status = EngineResult::Status::Failed;
    result.attempts_used = config.retry_budget;
    return result;
}

} // namespace

EngineResult run_engine(const Finding& f, const BugContextBundle& bundle, const Workspace& ws,
                        const EngineConfig& config, LlmGateway& llm, Executor& executor,
                        const fs::path& artifacts_dir)
{
    return engine_loop(f, bundle, ws, config, llm, executor, artifacts_dir, std::nullopt,
                       "gre-generate", "gre-repair", nullptr);
}

EngineResult run_engine_from_draft(const Finding& f, const BugContextBundle& bundle,
                                   const Workspace& ws, const EngineConfig& config,
                                   LlmGateway& llm, Executor& executor,
                                   const fs::path& artifacts_dir, PoCDraft initial,
                                   const std::string& repair_stage, const PostCheck& post_check)
{
    return engine_loop(f, bundle, ws, config, llm, executor, artifacts_dir, std::move(initial),
                       repair_stage, repair_stage, post_check);
}

} // namespace smartpoc
