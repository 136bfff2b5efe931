#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace smartpoc {

enum class Visibility { Public, External, Internal, Private };

std::string to_string(Visibility v);

struct Parameter {
    std::string name;      // may be empty
    std::string type_text; // data-location keywords stripped
    bool operator==(const Parameter&) const = default;
};

/// One function definition, with its exact source text. body_text is the
/// byte-identical substring of the file covering the whole definition.
struct FunctionDef {
    std::string qualified_name; // "Contract.function"
    std::string simple_name;
    std::string contract;
    Visibility visibility = Visibility::Public;
    bool is_underscored = false;
    std::vector<Parameter> parameters;
    std::vector<std::string> modifiers;
    std::string file;
    int start_line = 0;
    int end_line = 0;
    std::string body_text;
    bool is_constructor_or_initializer = false;
    bool is_constructor = false;
};

struct ModifierDef {
    std::string qualified_name;
    std::string simple_name;
    std::string contract;
    std::vector<Parameter> parameters;
    std::string file;
    int start_line = 0;
    int end_line = 0;
    std::string body_text;
};

struct StateVariable {
    std::string contract;
    std::string name;
    std::string type_text;
    bool is_public = false;
    std::string file;
    int line = 0;
};

enum class ContractKind { Contract, AbstractContract, Interface, Library };

struct ContractDef {
    std::string name;
    ContractKind kind = ContractKind::Contract;
    std::vector<std::string> bases; // declared order
    std::string file;
    int start_line = 0;
    int end_line = 0;
    std::vector<std::size_t> function_ids; // indices into SourceModel::functions
    std::vector<std::size_t> modifier_ids;
    std::vector<StateVariable> state_variables;
};

struct SourceFile {
    std::string path; // relative to project root
    std::string text;
    std::optional<std::string> pragma_version; // "0.8.19"
};

using FunctionId = std::size_t;
using ModifierId = std::size_t;

/// Directed call edges between in-project function definitions.
/// Deterministic for a fixed input: ids follow file/source order and
/// adjacency lists are sorted.
struct CallGraph {
    std::size_t node_count = 0;
    std::vector<std::vector<FunctionId>> callees;
    std::vector<std::vector<FunctionId>> callers;

    std::vector<std::pair<FunctionId, FunctionId>> edges() const;
};

/// Externally callable surface: public/external functions plus one
/// synthesized getter per public state variable.
struct CallableDescriptor {
    enum class Kind { Function, Getter };
    Kind kind = Kind::Function;
    std::string contract;
    std::string name;
    std::vector<std::string> parameter_types;
    std::string return_type; // empty when unknown / none
    std::string signature() const;
};

struct BuildMetadata {
    std::optional<std::string> compiler_version; // from pragma
    std::vector<std::string> remappings;         // "alias=path" lines
};

/// Parsed view of one project: contracts, the canonical function set,
/// modifiers, the call graph, and build metadata.
class SourceModel {
public:
    std::string root;
    std::vector<SourceFile> files;
    std::vector<ContractDef> contracts;
    std::vector<FunctionDef> functions;   // the canonical function set
    std::vector<ModifierDef> modifier_defs;
    CallGraph graph;
    BuildMetadata metadata;

    std::optional<FunctionId> find_function(const std::string& name) const;
    std::vector<FunctionId> functions_named(const std::string& simple_name) const;
    bool has_function(const std::string& name) const;
    std::optional<ModifierId> find_modifier_for(FunctionId fn, const std::string& simple_name) const;

    /// Function containing this source line, if any.
    std::optional<FunctionId> function_at(const std::string& file, int line) const;

    /// Modifier ids referenced by a function, resolved in its contract's
    /// scope (own, then inherited). Unknown names are dropped.
    std::vector<ModifierId> modifiers_of(FunctionId fn) const;

private:
    friend SourceModel parse_project(const std::string&, const struct ParseOptions&);
    std::multimap<std::string, FunctionId> by_simple_name_;
    std::map<std::string, FunctionId> by_qualified_name_;
    void build_lookup();
};

struct ParseOptions {
    /// Optional call-graph export to ingest instead of native call-site
    /// detection. Line-delimited JSON records:
    ///   {"caller": "Contract.fn", "callee": "Contract.fn"}
    /// Endpoints missing from the catalog are dropped with a warning.
    std::optional<std::string> callgraph_import;
};

/// Parse every .sol file under root (recursively, sorted by path) and
/// assemble the model. Reads remappings.txt at root when present.
SourceModel parse_project(const std::string& root, const ParseOptions& options = {});

std::vector<CallableDescriptor> public_abi(const SourceModel& model);

/// Comments and string-literal contents replaced by spaces; byte positions
/// and newlines preserved.
std::string mask_comments_and_strings(const std::string& src);

/// One function definition found by a lightweight textual scan of a single
/// source.  Parameter types are canonicalized exactly like the project
/// parser's, so scanned drafts compare cleanly against the catalog.
struct ScannedFunction {
    std::string simple_name;
    std::vector<std::string> parameter_types;
    std::size_t begin = 0; // offset of the `function` keyword
    std::size_t end = 0;   // one past the body's closing brace or the `;`
};

std::vector<ScannedFunction> scan_function_definitions(const std::string& text);

/// True when the source declares at least one contract with a braced body.
bool has_contract_with_body(const std::string& text);

} // namespace smartpoc
