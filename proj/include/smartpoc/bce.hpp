#pragma once

#include "smartpoc/findings.hpp"
#include "smartpoc/llm.hpp"
#include "smartpoc/solidity_model.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace smartpoc {

inline constexpr std::size_t kDefaultLinkCandidateCap = 64;

struct SemanticLink {
    enum class Kind { Inverse, StateCoupled };
    std::string source;
    std::string target;
    Kind kind = Kind::Inverse;
};

std::string to_string(SemanticLink::Kind kind);

/// Catalog function rendered as name + parameter list only, the shape
/// shown to the link-inference prompt.
struct CandidateSignature {
    std::string name;
    std::string rendered;
};

/// Minimal view of the call graph that structural expansion needs.
/// Kept separate from SourceModel so the expansion rule can be tested
/// against randomly generated graphs.
struct ExpansionGraph {
    std::size_t node_count = 0;
    std::vector<std::vector<std::size_t>> callees;
    std::vector<std::vector<std::size_t>> callers;
    std::vector<bool> underscored;
    std::vector<std::vector<std::size_t>> modifiers; // per node
};

struct Expansion {
    std::vector<std::size_t> functions; // ascending node ids, seeds included
    std::vector<int> depths;            // parallel: hop distance used for ordering
    std::vector<std::size_t> modifiers; // ascending
};

ExpansionGraph expansion_view(const SourceModel& model);

/// seeds ∪ one hop of callers/callees ∪ the underscore-prefixed closure
/// along callee edges (a non-underscored callee of an underscored
/// function joins as the terminal hop and is not expanded further)
/// ∪ all modifiers of anything included.
Expansion expand_structural(const std::vector<std::size_t>& seeds, const ExpansionGraph& graph);

struct CatalogEntry {
    std::string contract;
    std::string simple_name;
    std::vector<std::string> parameter_types;
};

struct BugContextBundle {
    std::string finding_id;
    std::vector<std::string> key_functions;
    std::vector<SemanticLink> semantic_links;
    std::vector<FunctionId> slice_functions; // reachability order
    std::vector<int> slice_depths;           // parallel
    std::vector<std::string> slice_names;    // parallel, qualified
    std::vector<ModifierId> slice_modifiers; // first-reference order
    std::vector<std::string> modifier_names; // parallel, qualified
    std::vector<FunctionId> constructors_and_initializers;
    std::vector<std::string> constructor_names; // parallel, qualified
    BuildMetadata build_metadata;
    std::vector<CallableDescriptor> abi;
    std::string assembled_text;
    std::string target_contract;
    std::string target_file; // project-relative
    std::vector<CatalogEntry> target_catalog;
};

/// Machine-readable manifest of a bundle (the `slice` subcommand's
/// second artifact next to the assembled text).
nlohmann::ordered_json bundle_manifest(const BugContextBundle& bundle);

/// Ask the LLM which functions the finding implicates, then keep only
/// names that exist in the catalog. Never errors on unknown names.
std::vector<std::string> identify_key_functions(const Finding& f, const SourceModel& model,
                                                LlmGateway& llm);

/// Catalog signatures nearest to the keys by name-token overlap,
/// capped to bound prompt size.
std::vector<CandidateSignature> select_link_candidates(const std::vector<std::string>& keys,
                                                       const SourceModel& model,
                                                       std::size_t cap = kDefaultLinkCandidateCap);

/// Few-shot inference of inverse / state-coupled counterparts.
/// Unparseable replies yield an empty list, never an error.
std::vector<SemanticLink> infer_semantic_links(const std::string& finding_id,
                                               const std::vector<std::string>& keys,
                                               const std::vector<CandidateSignature>& candidates,
                                               LlmGateway& llm);

/// keys ∪ semantic-link targets resolved to node ids.
std::vector<std::size_t> seed_ids(const std::vector<std::string>& keys,
                                  const std::vector<SemanticLink>& links,
                                  const SourceModel& model);

BugContextBundle assemble_bundle(const Finding& f, const SourceModel& model,
                                 const Expansion& expansion,
                                 const std::vector<std::string>& keys,
                                 const std::vector<SemanticLink>& links);

/// bundle.txt (assembled text) + manifest.json under out_dir.
void write_bundle(const BugContextBundle& bundle, const std::string& out_dir);

/// Whole BCE stage for one finding. Falls back to the finding's own
/// normalized locations when key identification comes back empty.
BugContextBundle run_bce(const Finding& f, const SourceModel& model, LlmGateway& llm);

} // namespace smartpoc
