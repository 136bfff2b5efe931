#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace smartpoc {

class SourceModel;

/// Where a static analyzer pointed. Either already a function name, or a
/// raw file:line that normalization resolves against the source model.
struct FindingLocation {
    enum class Kind { FunctionName, FileLine };

    Kind kind = Kind::FunctionName;
    std::string function_name; // Kind::FunctionName
    std::string file;          // Kind::FileLine
    int line = 0;              // Kind::FileLine

    static FindingLocation name(std::string n)
    {
        FindingLocation loc;
        loc.kind = Kind::FunctionName;
        loc.function_name = std::move(n);
        return loc;
    }
    static FindingLocation file_line(std::string f, int l)
    {
        FindingLocation loc;
        loc.kind = Kind::FileLine;
        loc.file = std::move(f);
        loc.line = l;
        return loc;
    }

    std::string describe() const;
    bool operator==(const FindingLocation&) const = default;
};

enum class Severity { High, Other };

/// One normalized static-analysis report item.
struct Finding {
    std::string id;
    std::string tool;
    std::string project_ref;
    std::string narrative;
    std::string severity_text;             // as reported by the tool
    Severity severity = Severity::Other;
    std::vector<FindingLocation> locations;
    std::string vuln_type;                 // substituted for an empty narrative
    std::optional<bool> label;             // ground truth, benchmark mode only

    bool operator==(const Finding&) const = default;
};

struct FindingCorpus {
    std::vector<Finding> items;
    // project_ref -> indices into items, in load order
    std::map<std::string, std::vector<std::size_t>> by_project;

    void rebuild_index();
};

enum class FindingsFormat { NativeJson, SlitherJson };

FindingsFormat parse_findings_format(const std::string& name);

/// Load a findings file. Locations come back raw; no severity filtering.
FindingCorpus load_findings(const std::string& path, FindingsFormat format);

/// Keep only High-severity findings; retained items are untouched.
FindingCorpus filter_high_severity(const FindingCorpus& corpus);

/// Resolve raw locations to function names and substitute the
/// vulnerability type name for an empty narrative. Idempotent.
/// Throws StageError when a location resolves to no function.
Finding normalize_finding(const Finding& f, const SourceModel& model);

struct RejectedFinding {
    Finding finding;
    std::string reason;
};

struct NormalizedCorpus {
    FindingCorpus accepted;
    std::vector<RejectedFinding> rejected;
};

NormalizedCorpus normalize_corpus(const FindingCorpus& corpus, const SourceModel& model);

} // namespace smartpoc
