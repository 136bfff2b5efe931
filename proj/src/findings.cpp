#include "smartpoc/findings.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/solidity_model.hpp"
#include "smartpoc/text_util.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>

using nlohmann::json;

namespace smartpoc {

namespace {

Severity severity_from_text(const std::string& text)
{
    std::string t = to_lower(trim(text));
    return (t == "high" || t == "critical") ? Severity::High : Severity::Other;
}

FindingLocation location_from_json(const json& j, const std::string& path, int lineno)
{
    if (j.is_string())
        return FindingLocation::name(j.get<std::string>());
    if (j.is_object()) {
        if (!j.contains("file") || !j.contains("line"))
            throw ParseError(path, lineno, "location object needs \"file\" and \"line\"");
        if (!j["file"].is_string() || !j["line"].is_number_integer())
            throw ParseError(path, lineno, "location \"file\" must be string, \"line\" integer");
        return FindingLocation::file_line(j["file"].get<std::string>(), j["line"].get<int>());
    }
    throw ParseError(path, lineno, "location must be a name string or {file, line}");
}

std::string require_string(const json& rec, const char* field, const std::string& path, int lineno)
{
    if (!rec.contains(field))
        throw ParseError(path, lineno, std::string("missing field \"") + field + "\"");
    if (!rec[field].is_string())
        throw ParseError(path, lineno, std::string("field \"") + field + "\" must be a string");
    return rec[field].get<std::string>();
}

std::string optional_string(const json& rec, const char* field, const std::string& path, int lineno)
{
    if (!rec.contains(field) || rec[field].is_null())
        return "";
    if (!rec[field].is_string())
        throw ParseError(path, lineno, std::string("field \"") + field + "\" must be a string");
    return rec[field].get<std::string>();
}

/// One finding per line: {id, tool, project_ref, narrative, severity,
/// locations, type?, label?}. Raw locations kept as written.
FindingCorpus load_native(const std::string& path)
{
    FindingCorpus corpus;
    std::set<std::string> seen_ids;
    int lineno = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++lineno;
        if (trim(line).empty())
            continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded())
            throw ParseError(path, lineno, "invalid JSON record");
        if (!rec.is_object())
            throw ParseError(path, lineno, "record must be a JSON object");

        Finding f;
        f.id = require_string(rec, "id", path, lineno);
        if (f.id.empty())
            throw ParseError(path, lineno, "field \"id\" must be non-empty");
        if (!seen_ids.insert(f.id).second)
            throw ParseError(path, lineno, "duplicate finding id \"" + f.id + "\"");
        f.tool = optional_string(rec, "tool", path, lineno);
        f.project_ref = optional_string(rec, "project_ref", path, lineno);
        f.narrative = optional_string(rec, "narrative", path, lineno);
        f.severity_text = optional_string(rec, "severity", path, lineno);
        f.severity = severity_from_text(f.severity_text);
        f.vuln_type = optional_string(rec, "type", path, lineno);
        if (rec.contains("label")) {
            if (!rec["label"].is_boolean())
                throw ParseError(path, lineno, "field \"label\" must be a boolean");
            f.label = rec["label"].get<bool>();
        }
        if (rec.contains("locations")) {
            if (!rec["locations"].is_array())
                throw ParseError(path, lineno, "field \"locations\" must be an array");
            for (const auto& loc : rec["locations"])
                f.locations.push_back(location_from_json(loc, path, lineno));
        }
        corpus.items.push_back(std::move(f));
    }
    corpus.rebuild_index();
    return corpus;
}

/// Adapter for `slither --json` report files: one finding per detector
/// result; function elements become name locations, otherwise the first
/// source mapping becomes a file/line location.
FindingCorpus load_slither(const std::string& path)
{
    json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded())
        throw ParseError(path, 0, "invalid JSON document");
    if (!doc.contains("results") || !doc["results"].is_object() ||
        !doc["results"].contains("detectors") || !doc["results"]["detectors"].is_array())
        throw ParseError(path, 0, "missing field \"results.detectors\"");

    FindingCorpus corpus;
    int index = 0;
    for (const auto& det : doc["results"]["detectors"]) {
        ++index;
        Finding f;
        f.id = "slither-" + std::to_string(index);
        f.tool = "slither";
        f.narrative = det.value("description", "");
        f.vuln_type = det.value("check", "");
        f.severity_text = det.value("impact", "");
        f.severity = severity_from_text(f.severity_text);
        if (det.contains("elements") && det["elements"].is_array()) {
            for (const auto& el : det["elements"]) {
                if (el.value("type", "") != "function")
                    continue;
                std::string name = el.value("name", "");
                if (!name.empty())
                    f.locations.push_back(FindingLocation::name(name));
            }
            if (f.locations.empty()) {
                for (const auto& el : det["elements"]) {
                    if (!el.contains("source_mapping"))
                        continue;
                    const auto& sm = el["source_mapping"];
                    std::string file = sm.value("filename_relative", "");
                    if (file.empty() || !sm.contains("lines") || !sm["lines"].is_array() ||
                        sm["lines"].empty())
                        continue;
                    f.locations.push_back(FindingLocation::file_line(file, sm["lines"][0].get<int>()));
                    break;
                }
            }
        }
        corpus.items.push_back(std::move(f));
    }
    corpus.rebuild_index();
    return corpus;
}

} // namespace

std::string FindingLocation::describe() const
{
    if (kind == Kind::FunctionName)
        return function_name;
    return file + ":" + std::to_string(line);
}

void FindingCorpus::rebuild_index()
{
    by_project.clear();
    for (std::size_t i = 0; i < items.size(); ++i)
        by_project.emplace(items[i].project_ref, i);
}

FindingsFormat parse_findings_format(const std::string& name)
{
    if (name == "native-json")
        return FindingsFormat::NativeJson;
    if (name == "slither-json")
        return FindingsFormat::SlitherJson;
    throw ConfigError("unknown findings format \"" + name +
                      "\" (expected native-json or slither-json)");
}

FindingCorpus load_findings(const std::string& path, FindingsFormat format)
{
    switch (format) {
    case FindingsFormat::NativeJson:
        return load_native(path);
    case FindingsFormat::SlitherJson:
        return load_slither(path);
    }
    throw ConfigError("unhandled findings format");
}

FindingCorpus filter_high_severity(const FindingCorpus& corpus)
{
    FindingCorpus out;
    for (const auto& f : corpus.items)
        if (f.severity == Severity::High)
            out.items.push_back(f);
    out.rebuild_index();
    return out;
}

namespace {

/// Project-relative path match, tolerant of analyzer prefixes: exact
/// first, then a unique suffix match on whole path segments.
std::optional<std::string> match_model_file(const SourceModel& model, const std::string& given)
{
    for (const auto& file : model.files)
        if (file.path == given)
            return file.path;
    std::vector<std::string> hits;
    for (const auto& file : model.files) {
        const std::string& p = file.path;
        if (p.size() < given.size())
            continue;
        if (p.compare(p.size() - given.size(), given.size(), given) != 0)
            continue;
        if (p.size() == given.size() || p[p.size() - given.size() - 1] == '/')
            hits.push_back(p);
    }
    if (hits.size() == 1)
        return hits.front();
    return std::nullopt;
}

} // namespace

Finding normalize_finding(const Finding& f, const SourceModel& model)
{
    Finding out = f;
    if (trim(out.narrative).empty()) {
        if (trim(out.vuln_type).empty())
            throw StageError("normalize",
                             "finding " + f.id + ": empty narrative and no vulnerability type");
        out.narrative = out.vuln_type;
    }

    std::vector<FindingLocation> resolved;
    std::set<std::string> seen;
    for (const auto& loc : out.locations) {
        FindingLocation r = loc;
        if (loc.kind == FindingLocation::Kind::FunctionName) {
            if (!model.has_function(loc.function_name))
                throw StageError("normalize", "finding " + f.id + ": location \"" +
                                                  loc.describe() +
                                                  "\" names no function in the source model");
        } else {
            auto file = match_model_file(model, loc.file);
            if (!file)
                throw StageError("normalize", "finding " + f.id + ": location \"" +
                                                  loc.describe() +
                                                  "\" names no file in the source model");
            auto fid = model.function_at(*file, loc.line);
            if (!fid)
                throw StageError("normalize", "finding " + f.id + ": location \"" +
                                                  loc.describe() +
                                                  "\" falls inside no function body");
            r = FindingLocation::name(model.functions[*fid].simple_name);
        }
        if (seen.insert(r.function_name).second)
            resolved.push_back(std::move(r));
    }
    out.locations = std::move(resolved);
    return out;
}

NormalizedCorpus normalize_corpus(const FindingCorpus& corpus, const SourceModel& model)
{
    NormalizedCorpus out;
    for (const auto& f : corpus.items) {
        try {
            out.accepted.items.push_back(normalize_finding(f, model));
        } catch (const Error& e) {
            out.rejected.push_back({f, e.what()});
        }
    }
    out.accepted.rebuild_index();
    return out;
}

} // namespace smartpoc
