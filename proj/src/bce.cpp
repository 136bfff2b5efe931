#include "smartpoc/bce.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/json_util.hpp"
#include "smartpoc/text_util.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <filesystem>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace smartpoc {

std::string to_string(SemanticLink::Kind kind)
{
    return kind == SemanticLink::Kind::Inverse ? "inverse" : "state-coupled";
}

ExpansionGraph expansion_view(const SourceModel& model)
{
    ExpansionGraph g;
    g.node_count = model.functions.size();
    g.callees = model.graph.callees;
    g.callers = model.graph.callers;
    g.underscored.resize(g.node_count);
    g.modifiers.resize(g.node_count);
    for (std::size_t i = 0; i < g.node_count; ++i) {
        g.underscored[i] = model.functions[i].is_underscored;
        for (ModifierId mid : model.modifiers_of(i))
            g.modifiers[i].push_back(mid);
    }
    return g;
}

Expansion expand_structural(const std::vector<std::size_t>& seeds, const ExpansionGraph& graph)
{
    const std::size_t n = graph.node_count;
    for (std::size_t s : seeds)
        if (s >= n)
            throw Error("expansion seed " + std::to_string(s) + " outside graph");

    std::vector<int> depth(n, -1);
    std::vector<bool> generator(n, false);
    std::deque<std::size_t> work;

    for (std::size_t s : seeds)
        depth[s] = 0;

    // hop 1: both directions; these nodes seed the underscore closure
    for (std::size_t s : seeds) {
        for (const auto* adj : {&graph.callees[s], &graph.callers[s]}) {
            for (std::size_t v : *adj) {
                if (depth[v] < 0)
                    depth[v] = 1;
                if (!generator[v]) {
                    generator[v] = true;
                    work.push_back(v);
                }
            }
        }
    }

    // closure along callee edges: an underscored node keeps expanding;
    // a non-underscored callee of an underscored node is the terminal hop
    while (!work.empty()) {
        std::size_t w = work.front();
        work.pop_front();
        for (std::size_t c : graph.callees[w]) {
            if (!graph.underscored[c] && !graph.underscored[w])
                continue;
            if (depth[c] < 0)
                depth[c] = depth[w] + 1;
            if (graph.underscored[c] && !generator[c]) {
                generator[c] = true;
                work.push_back(c);
            }
        }
    }

    Expansion out;
    std::set<std::size_t> mods;
    for (std::size_t i = 0; i < n; ++i) {
        if (depth[i] < 0)
            continue;
        out.functions.push_back(i);
        out.depths.push_back(depth[i]);
        mods.insert(graph.modifiers[i].begin(), graph.modifiers[i].end());
    }
    out.modifiers.assign(mods.begin(), mods.end());
    return out;
}

namespace {

std::string simple_of(const std::string& name)
{
    auto dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(dot + 1);
}

std::vector<FunctionId> resolve_name(const std::string& name, const SourceModel& model)
{
    if (name.find('.') != std::string::npos) {
        if (auto id = model.find_function(name))
            return {*id};
        return {};
    }
    return model.functions_named(name);
}

/// Lowercased name fragments split on underscores and camelCase
/// boundaries; the overlap metric for candidate ranking.
std::set<std::string> name_tokens(const std::string& name)
{
    std::set<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty())
            tokens.insert(current);
        current.clear();
    };
    for (std::size_t i = 0; i < name.size(); ++i) {
        char c = name[i];
        if (c == '_' || c == '$') {
            flush();
            continue;
        }
        if (std::isupper(static_cast<unsigned char>(c)) && !current.empty() &&
            std::islower(static_cast<unsigned char>(name[i - 1])))
            flush();
        current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    flush();
    return tokens;
}

std::string render_signature(const FunctionDef& f)
{
    std::string out = f.simple_name + "(";
    for (std::size_t i = 0; i < f.parameters.size(); ++i) {
        if (i)
            out += ",";
        out += f.parameters[i].type_text;
    }
    out += ")";
    return out;
}

std::vector<std::string> join_and_filter(const std::vector<std::string>& proposals,
                                         const SourceModel& model)
{
    std::vector<std::string> keys;
    std::set<std::string> seen;
    for (const auto& raw : proposals) {
        std::string name = trim(raw);
        if (name.empty() || !model.has_function(name))
            continue;
        if (seen.insert(name).second)
            keys.push_back(name);
    }
    return keys;
}

/// Identifier tokens in order of appearance; the loose fallback when a
/// reply is not a JSON array. Catalog filtering makes this safe.
std::vector<std::string> identifier_tokens(const std::string& text)
{
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        while (!current.empty() && current.back() == '.')
            current.pop_back();
        if (!current.empty())
            tokens.push_back(current);
        current.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
            (c == '.' && !current.empty()))
            current += c;
        else
            flush();
    }
    flush();
    return tokens;
}

} // namespace

std::vector<std::string> identify_key_functions(const Finding& f, const SourceModel& model,
                                                LlmGateway& llm)
{
    std::string locations;
    for (const auto& loc : f.locations) {
        if (!locations.empty())
            locations += ", ";
        locations += loc.describe();
    }
    if (locations.empty())
        locations = "(none)";

    PromptPayload p;
    p.stage = "bce-keys";
    p.finding_id = f.id;
    p.system_text = "You analyze smart-contract static-analysis findings and name the "
                    "project functions they implicate.";
    p.user_text = "Finding " + f.id + (f.tool.empty() ? "" : " reported by " + f.tool) + ":\n" +
                  f.narrative + "\n\nReported locations: " + locations +
                  "\n\nName the functions this finding implicates. Reply with a JSON array of "
                  "function names, for example [\"withdraw\"].";

    LlmReply reply = llm.complete(p);

    std::vector<std::string> proposals;
    if (auto payload = find_json_payload(reply.text); payload && payload->is_array()) {
        for (const auto& item : *payload)
            if (item.is_string())
                proposals.push_back(item.get<std::string>());
    } else {
        proposals = identifier_tokens(reply.text);
    }
    return join_and_filter(proposals, model);
}

std::vector<CandidateSignature> select_link_candidates(const std::vector<std::string>& keys,
                                                       const SourceModel& model, std::size_t cap)
{
    std::set<std::string> key_names;
    std::set<std::string> key_tokens;
    for (const auto& k : keys) {
        std::string simple = simple_of(k);
        key_names.insert(simple);
        auto toks = name_tokens(simple);
        key_tokens.insert(toks.begin(), toks.end());
    }

    struct Scored {
        std::size_t overlap;
        std::string name;
        std::string rendered;
    };
    std::vector<Scored> scored;
    std::set<std::string> seen_names;
    for (const auto& f : model.functions) {
        if (f.is_constructor_or_initializer || f.simple_name == "receive" ||
            f.simple_name == "fallback")
            continue;
        if (key_names.count(f.simple_name) || !seen_names.insert(f.simple_name).second)
            continue;
        std::size_t overlap = 0;
        for (const auto& tok : name_tokens(f.simple_name))
            overlap += key_tokens.count(tok);
        scored.push_back({overlap, f.simple_name, render_signature(f)});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.overlap != b.overlap)
            return a.overlap > b.overlap;
        return a.name < b.name;
    });
    if (scored.size() > cap)
        scored.resize(cap);

    std::vector<CandidateSignature> out;
    for (auto& s : scored)
        out.push_back({std::move(s.name), std::move(s.rendered)});
    return out;
}

std::vector<SemanticLink> infer_semantic_links(const std::string& finding_id,
                                               const std::vector<std::string>& keys,
                                               const std::vector<CandidateSignature>& candidates,
                                               LlmGateway& llm)
{
    std::string key_list;
    for (const auto& k : keys)
        key_list += simple_of(k) + "\n";
    std::string candidate_list;
    std::set<std::string> candidate_names;
    for (const auto& c : candidates) {
        candidate_list += c.rendered + "\n";
        candidate_names.insert(c.name);
    }

    PromptPayload p;
    p.stage = "bce-links";
    p.finding_id = finding_id;
    p.system_text = "You relate smart-contract functions using only their signatures.";
    p.user_text =
        "Key functions:\n" + key_list + "\nCandidate functions:\n" + candidate_list +
        "\nFor each key function, find related candidates. Use kind \"inverse\" when the "
        "candidate undoes the key's state effect, the way burn undoes mint. Use kind "
        "\"state-coupled\" when the pair writes and reads the same state, the way checkFee "
        "depends on setFee.\nReply with a JSON array like "
        "[{\"source\": \"mint\", \"target\": \"burn\", \"kind\": \"inverse\"}]. "
        "Reply [] when no candidate is related.";

    LlmReply reply = llm.complete(p);

    auto payload = find_json_payload(reply.text);
    if (!payload || !payload->is_array()) {
        log_warn("finding " + finding_id + ": unparseable semantic-link reply; using none");
        return {};
    }

    std::set<std::string> key_names;
    for (const auto& k : keys)
        key_names.insert(simple_of(k));

    std::vector<SemanticLink> links;
    std::set<std::string> seen;
    for (const auto& item : *payload) {
        if (!item.is_object() || !item.contains("source") || !item.contains("target") ||
            !item.contains("kind"))
            continue;
        if (!item["source"].is_string() || !item["target"].is_string() ||
            !item["kind"].is_string())
            continue;
        SemanticLink link;
        link.source = simple_of(trim(item["source"].get<std::string>()));
        link.target = simple_of(trim(item["target"].get<std::string>()));
        std::string kind = to_lower(trim(item["kind"].get<std::string>()));
        if (kind == "inverse")
            link.kind = SemanticLink::Kind::Inverse;
        else if (kind == "state-coupled" || kind == "state_coupled" || kind == "statecoupled")
            link.kind = SemanticLink::Kind::StateCoupled;
        else
            continue;
        if (!key_names.count(link.source) || !candidate_names.count(link.target) ||
            link.source == link.target)
            continue;
        if (seen.insert(link.source + "|" + link.target + "|" + to_string(link.kind)).second)
            links.push_back(std::move(link));
    }
    return links;
}

std::vector<std::size_t> seed_ids(const std::vector<std::string>& keys,
                                  const std::vector<SemanticLink>& links,
                                  const SourceModel& model)
{
    std::set<std::size_t> ids;
    for (const auto& k : keys)
        for (FunctionId id : resolve_name(k, model))
            ids.insert(id);
    for (const auto& link : links)
        for (FunctionId id : resolve_name(link.target, model))
            ids.insert(id);
    return {ids.begin(), ids.end()};
}

BugContextBundle assemble_bundle(const Finding& f, const SourceModel& model,
                                 const Expansion& expansion,
                                 const std::vector<std::string>& keys,
                                 const std::vector<SemanticLink>& links)
{
    if (expansion.functions.empty())
        throw StageError("bce", "finding " + f.id + ": empty slice");

    BugContextBundle bundle;
    bundle.finding_id = f.id;
    bundle.key_functions = keys;
    bundle.semantic_links = links;

    // reachability order with deterministic ties
    std::vector<std::size_t> order(expansion.functions.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (expansion.depths[a] != expansion.depths[b])
            return expansion.depths[a] < expansion.depths[b];
        return model.functions[expansion.functions[a]].qualified_name <
               model.functions[expansion.functions[b]].qualified_name;
    });
    for (std::size_t i : order) {
        bundle.slice_functions.push_back(expansion.functions[i]);
        bundle.slice_depths.push_back(expansion.depths[i]);
        bundle.slice_names.push_back(model.functions[expansion.functions[i]].qualified_name);
    }

    // target = contract of the first key (first slice function as fallback)
    FunctionId target_fn = bundle.slice_functions.front();
    if (!keys.empty()) {
        auto resolved = resolve_name(keys.front(), model);
        if (!resolved.empty())
            target_fn = resolved.front();
    }
    bundle.target_contract = model.functions[target_fn].contract;
    bundle.target_file = model.functions[target_fn].file;

    // contracts in first-appearance order drive the constructor section
    std::vector<std::string> contract_order;
    std::set<std::string> contract_seen;
    for (FunctionId fid : bundle.slice_functions)
        if (contract_seen.insert(model.functions[fid].contract).second)
            contract_order.push_back(model.functions[fid].contract);

    std::set<FunctionId> slice_set(bundle.slice_functions.begin(),
                                   bundle.slice_functions.end());
    for (const auto& contract_name : contract_order) {
        for (const auto& contract : model.contracts) {
            if (contract.name != contract_name)
                continue;
            for (FunctionId fid : contract.function_ids)
                if (model.functions[fid].is_constructor_or_initializer) {
                    bundle.constructors_and_initializers.push_back(fid);
                    bundle.constructor_names.push_back(model.functions[fid].qualified_name);
                }
        }
    }

    // modifiers in first-reference order
    std::set<ModifierId> expansion_mods(expansion.modifiers.begin(), expansion.modifiers.end());
    std::set<ModifierId> mod_seen;
    for (FunctionId fid : bundle.slice_functions)
        for (ModifierId mid : model.modifiers_of(fid))
            if (expansion_mods.count(mid) && mod_seen.insert(mid).second) {
                bundle.slice_modifiers.push_back(mid);
                bundle.modifier_names.push_back(model.modifier_defs[mid].qualified_name);
            }

    // build metadata: the target file's pragma wins, any pragma in the
    // project is the fallback
    for (const auto& file : model.files)
        if (file.path == bundle.target_file && file.pragma_version)
            bundle.build_metadata.compiler_version = file.pragma_version;
    if (!bundle.build_metadata.compiler_version)
        bundle.build_metadata.compiler_version = model.metadata.compiler_version;
    if (!bundle.build_metadata.compiler_version)
        throw StageError("bce", "finding " + f.id +
                                    ": no pragma solidity version anywhere in the project; "
                                    "compiler version unresolvable");
    bundle.build_metadata.remappings = model.metadata.remappings;

    bundle.abi = public_abi(model);
    for (const auto& fn : model.functions) {
        CatalogEntry entry;
        entry.contract = fn.contract;
        entry.simple_name = fn.simple_name;
        for (const auto& param : fn.parameters)
            entry.parameter_types.push_back(param.type_text);
        bundle.target_catalog.push_back(std::move(entry));
    }

    // assembled text: header, constructors, sliced functions in
    // reachability order, then modifiers; each definition exactly once
    std::ostringstream text;
    text << "// Bug context for finding " << f.id << "\n";
    text << "// Target contract: " << bundle.target_contract << " (" << bundle.target_file
         << ")\n";
    text << "// Compiler: " << *bundle.build_metadata.compiler_version << "\n";
    if (!bundle.build_metadata.remappings.empty()) {
        text << "// Remappings:";
        for (const auto& r : bundle.build_metadata.remappings)
            text << " " << r;
        text << "\n";
    }
    if (!keys.empty()) {
        text << "// Key functions:";
        for (const auto& k : keys)
            text << " " << k;
        text << "\n";
    }
    for (const auto& link : links)
        text << "// Semantic link: " << link.source << " -> " << link.target << " ("
             << to_string(link.kind) << ")\n";

    std::set<FunctionId> emitted;
    bool header_done = false;
    for (FunctionId fid : bundle.constructors_and_initializers) {
        if (slice_set.count(fid) || !emitted.insert(fid).second)
            continue;
        const auto& fn = model.functions[fid];
        if (!header_done) {
            text << "\n// Constructors and initializers\n";
            header_done = true;
        }
        text << "// " << fn.qualified_name << " (" << fn.file << ":" << fn.start_line << "-"
             << fn.end_line << ")\n"
             << fn.body_text << "\n";
    }

    text << "\n// Bug-related functions\n";
    for (FunctionId fid : bundle.slice_functions) {
        if (!emitted.insert(fid).second)
            continue;
        const auto& fn = model.functions[fid];
        text << "// " << fn.qualified_name << " (" << fn.file << ":" << fn.start_line << "-"
             << fn.end_line << ")\n"
             << fn.body_text << "\n";
    }

    if (!bundle.slice_modifiers.empty()) {
        text << "\n// Modifiers\n";
        for (ModifierId mid : bundle.slice_modifiers) {
            const auto& m = model.modifier_defs[mid];
            text << "// " << m.qualified_name << " (" << m.file << ":" << m.start_line << "-"
                 << m.end_line << ")\n"
                 << m.body_text << "\n";
        }
    }

    bundle.assembled_text = text.str();
    return bundle;
}

nlohmann::ordered_json bundle_manifest(const BugContextBundle& bundle)
{
    ordered_json manifest;
    manifest["finding"] = bundle.finding_id;
    manifest["target_contract"] = bundle.target_contract;
    manifest["target_file"] = bundle.target_file;
    manifest["compiler_version"] = bundle.build_metadata.compiler_version.value_or("");
    manifest["remappings"] = bundle.build_metadata.remappings;
    manifest["key_functions"] = bundle.key_functions;
    manifest["semantic_links"] = ordered_json::array();
    for (const auto& link : bundle.semantic_links)
        manifest["semantic_links"].push_back({{"source", link.source},
                                              {"target", link.target},
                                              {"kind", to_string(link.kind)}});
    manifest["slice"] = ordered_json::array();
    for (std::size_t i = 0; i < bundle.slice_names.size(); ++i)
        manifest["slice"].push_back(
            {{"function", bundle.slice_names[i]}, {"depth", bundle.slice_depths[i]}});
    manifest["modifiers"] = bundle.modifier_names;
    manifest["constructors_and_initializers"] = bundle.constructor_names;
    manifest["abi"] = ordered_json::array();
    for (const auto& d : bundle.abi)
        manifest["abi"].push_back(d.signature());
    manifest["token_count"] = count_tokens(bundle.assembled_text);
    return manifest;
}

void write_bundle(const BugContextBundle& bundle, const std::string& out_dir)
{
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "bundle.txt").string(), bundle.assembled_text);
    write_file((fs::path(out_dir) / "manifest.json").string(),
               bundle_manifest(bundle).dump(2) + "\n");
}

BugContextBundle run_bce(const Finding& f, const SourceModel& model, LlmGateway& llm)
{
    auto keys = identify_key_functions(f, model, llm);
    if (keys.empty()) {
        std::set<std::string> seen;
        for (const auto& loc : f.locations)
            if (loc.kind == FindingLocation::Kind::FunctionName &&
                model.has_function(loc.function_name) && seen.insert(loc.function_name).second)
                keys.push_back(loc.function_name);
        if (!keys.empty())
            llm.ledger().note("finding " + f.id +
                              ": key identification yielded nothing usable; seeded from "
                              "reported locations");
    }
    if (keys.empty())
        throw StageError("bce-keys",
                         "finding " + f.id + ": no key functions resolvable against the catalog");

    auto candidates = select_link_candidates(keys, model);
    std::vector<SemanticLink> links;
    if (!candidates.empty())
        links = infer_semantic_links(f.id, keys, candidates, llm);

    auto seeds = seed_ids(keys, links, model);
    auto expansion = expand_structural(seeds, expansion_view(model));
    return assemble_bundle(f, model, expansion, keys, links);
}

} // namespace smartpoc
