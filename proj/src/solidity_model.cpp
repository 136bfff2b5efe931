#include "smartpoc/solidity_model.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <set>

namespace fs = std::filesystem;

namespace smartpoc {

namespace {

bool is_ident_start(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_ident_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

} // namespace

// Comments and string-literal contents replaced by spaces, byte
// positions and newlines preserved. All structural scanning runs on
// the masked text; exact spans are cut from the raw text.
std::string mask_comments_and_strings(const std::string& src)
{
    std::string out = src;
    std::size_t i = 0;
    const std::size_t n = src.size();
    auto blank = [&](std::size_t pos) {
        if (out[pos] != '\n')
            out[pos] = ' ';
    };
    while (i < n) {
        char c = src[i];
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n')
                blank(i++);
        } else if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            blank(i);
            blank(i + 1);
            i += 2;
            while (i < n && !(src[i] == '*' && i + 1 < n && src[i + 1] == '/'))
                blank(i++);
            if (i < n) {
                blank(i);
                blank(i + 1);
                i += 2;
            }
        } else if (c == '"' || c == '\'') {
            char quote = c;
            blank(i++);
            while (i < n && src[i] != quote) {
                if (src[i] == '\\' && i + 1 < n) {
                    blank(i);
                    blank(i + 1);
                    i += 2;
                    continue;
                }
                blank(i++);
            }
            if (i < n)
                blank(i++);
        } else {
            ++i;
        }
    }
    return out;
}

namespace {

std::vector<std::size_t> line_starts_of(const std::string& text)
{
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i < text.size(); ++i)
        if (text[i] == '\n')
            starts.push_back(i + 1);
    return starts;
}

int line_of(const std::vector<std::size_t>& starts, std::size_t pos)
{
    auto it = std::upper_bound(starts.begin(), starts.end(), pos);
    return static_cast<int>(it - starts.begin());
}

std::size_t skip_ws(const std::string& s, std::size_t pos)
{
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
        ++pos;
    return pos;
}

std::string ident_at(const std::string& s, std::size_t pos)
{
    std::size_t end = pos;
    if (end < s.size() && is_ident_start(s[end]))
        while (end < s.size() && is_ident_char(s[end]))
            ++end;
    return s.substr(pos, end - pos);
}

bool word_at(const std::string& s, std::size_t pos, std::string_view word)
{
    if (pos + word.size() > s.size())
        return false;
    if (s.compare(pos, word.size(), word) != 0)
        return false;
    if (pos > 0 && is_ident_char(s[pos - 1]))
        return false;
    std::size_t end = pos + word.size();
    return end >= s.size() || !is_ident_char(s[end]);
}

/// Position of the delimiter matching s[open], or npos when unbalanced.
std::size_t match_delim(const std::string& s, std::size_t open)
{
    char o = s[open];
    char c = o == '(' ? ')' : (o == '[' ? ']' : '}');
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == o)
            ++depth;
        else if (s[i] == c && --depth == 0)
            return i;
    }
    return std::string::npos;
}

const std::set<std::string>& header_keywords()
{
    static const std::set<std::string> kw = {
        "public",  "external", "internal", "private", "pure",    "view",
        "payable", "constant", "virtual",  "override", "returns",
    };
    return kw;
}

bool is_elementary_type(const std::string& t)
{
    if (t == "address" || t == "address payable" || t == "bool" || t == "string" || t == "bytes")
        return true;
    auto numeric_suffix_ok = [](std::string_view rest) {
        if (rest.empty())
            return true;
        for (char c : rest)
            if (!std::isdigit(static_cast<unsigned char>(c)))
                return false;
        return true;
    };
    if (starts_with(t, "uint") && numeric_suffix_ok(std::string_view(t).substr(4)))
        return true;
    if (starts_with(t, "int") && numeric_suffix_ok(std::string_view(t).substr(3)))
        return true;
    if (starts_with(t, "bytes") && numeric_suffix_ok(std::string_view(t).substr(5)))
        return true;
    return false;
}

std::string canonical_type_token(const std::string& tok)
{
    if (tok == "uint")
        return "uint256";
    if (tok == "int")
        return "int256";
    if (tok == "byte")
        return "bytes1";
    return tok;
}

struct Token {
    std::string text;
    bool is_ident = false;
};

std::vector<Token> tokenize(const std::string& s)
{
    std::vector<Token> toks;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (is_ident_start(c) || std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t e = i;
            while (e < s.size() && is_ident_char(s[e]))
                ++e;
            toks.push_back({s.substr(i, e - i), is_ident_start(c)});
            i = e;
        } else {
            toks.push_back({std::string(1, c), false});
            ++i;
        }
    }
    return toks;
}

std::string join_type_tokens(const std::vector<Token>& toks)
{
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i > 0 && toks[i].is_ident && toks[i - 1].is_ident)
            out += ' ';
        out += toks[i].is_ident ? canonical_type_token(toks[i].text) : toks[i].text;
    }
    return out;
}

bool is_data_location(const std::string& t)
{
    return t == "memory" || t == "calldata" || t == "storage";
}

/// "uint256 amount" -> {amount, uint256}; locations dropped; the trailing
/// identifier is the name unless the whole text is a bare type.
Parameter parse_parameter(const std::string& text)
{
    std::vector<Token> toks;
    for (auto& t : tokenize(text))
        if (!(t.is_ident && is_data_location(t.text)))
            toks.push_back(std::move(t));

    Parameter p;
    if (toks.empty())
        return p;
    // "address payable x" keeps x as the name; a lone "Foo" is never split
    bool last_is_name = toks.size() >= 2 && toks.back().is_ident && toks.back().text != "payable";
    if (last_is_name) {
        p.name = toks.back().text;
        toks.pop_back();
    }
    p.type_text = join_type_tokens(toks);
    return p;
}

std::vector<std::string> split_top_level(const std::string& s, char sep)
{
    std::vector<std::string> parts;
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '(' || c == '[')
            ++depth;
        else if (c == ')' || c == ']')
            --depth;
        else if (c == sep && depth == 0) {
            parts.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    parts.push_back(s.substr(start));
    return parts;
}

std::vector<Parameter> parse_parameter_list(const std::string& text)
{
    std::vector<Parameter> params;
    if (trim(text).empty())
        return params;
    for (const auto& piece : split_top_level(text, ','))
        params.push_back(parse_parameter(piece));
    return params;
}

struct HeaderInfo {
    Visibility visibility = Visibility::Public;
    std::vector<std::string> modifiers;
    std::string return_type;
};

/// Scan the text between the parameter list and the body for
/// visibility, returns(...), and modifier invocations.
HeaderInfo parse_header_tail(const std::string& masked, std::size_t begin, std::size_t end)
{
    HeaderInfo info;
    std::size_t i = begin;
    while (i < end) {
        char c = masked[i];
        if (!is_ident_start(c)) {
            ++i;
            continue;
        }
        std::string word = ident_at(masked, i);
        std::size_t after = skip_ws(masked, i + word.size());
        if (word == "public")
            info.visibility = Visibility::Public;
        else if (word == "external")
            info.visibility = Visibility::External;
        else if (word == "internal")
            info.visibility = Visibility::Internal;
        else if (word == "private")
            info.visibility = Visibility::Private;
        else if (word == "returns" && after < end && masked[after] == '(') {
            std::size_t close = match_delim(masked, after);
            if (close == std::string::npos || close > end)
                break;
            auto rets = parse_parameter_list(masked.substr(after + 1, close - after - 1));
            std::vector<std::string> types;
            for (auto& r : rets)
                types.push_back(r.type_text);
            info.return_type = types.empty() ? "" : types.front();
            for (std::size_t k = 1; k < types.size(); ++k)
                info.return_type += "," + types[k];
            i = close + 1;
            continue;
        } else if (word == "override" && after < end && masked[after] == '(') {
            std::size_t close = match_delim(masked, after);
            if (close == std::string::npos || close > end)
                break;
            i = close + 1;
            continue;
        } else if (!header_keywords().count(word)) {
            info.modifiers.push_back(word);
            if (after < end && masked[after] == '(') {
                std::size_t close = match_delim(masked, after);
                if (close == std::string::npos || close > end)
                    break;
                i = close + 1;
                continue;
            }
        }
        i += word.size();
    }
    return info;
}

struct RawFunction {
    FunctionDef def;
    std::size_t body_begin = 0; // offset just past '{', 0 when bodyless
    std::size_t body_end = 0;   // offset of '}'
    std::string return_type;
};

struct RawContract {
    ContractDef def;
    std::vector<RawFunction> functions;
    std::vector<ModifierDef> modifiers;
    std::vector<std::string> using_libraries;
};

struct ParsedFile {
    SourceFile file;
    std::vector<RawContract> contracts;
};

std::optional<std::string> extract_pragma_version(const std::string& masked)
{
    std::size_t pos = 0;
    while ((pos = masked.find("pragma", pos)) != std::string::npos) {
        if (!word_at(masked, pos, "pragma")) {
            ++pos;
            continue;
        }
        std::size_t semi = masked.find(';', pos);
        if (semi == std::string::npos)
            return std::nullopt;
        std::string directive = masked.substr(pos, semi - pos);
        if (directive.find("solidity") != std::string::npos) {
            // first x.y or x.y.z in the version expression
            std::size_t i = 0;
            while (i < directive.size()) {
                if (!std::isdigit(static_cast<unsigned char>(directive[i]))) {
                    ++i;
                    continue;
                }
                std::size_t e = i;
                int dots = 0;
                while (e < directive.size()) {
                    if (std::isdigit(static_cast<unsigned char>(directive[e]))) {
                        ++e;
                    } else if (directive[e] == '.' && dots < 2 && e + 1 < directive.size() &&
                               std::isdigit(static_cast<unsigned char>(directive[e + 1]))) {
                        ++dots;
                        ++e;
                    } else {
                        break;
                    }
                }
                if (dots >= 1)
                    return directive.substr(i, e - i);
                i = e + 1;
            }
        }
        pos = semi + 1;
    }
    return std::nullopt;
}

class FileParser {
public:
    FileParser(std::string rel_path, std::string text)
        : path_(std::move(rel_path)),
          raw_(std::move(text)),
          masked_(mask_comments_and_strings(raw_)),
          lines_(line_starts_of(raw_))
    {
    }

    ParsedFile parse()
    {
        ParsedFile out;
        out.file.path = path_;
        out.file.text = raw_;
        out.file.pragma_version = extract_pragma_version(masked_);

        std::size_t i = 0;
        while (i < masked_.size()) {
            if (!is_ident_start(masked_[i])) {
                ++i;
                continue;
            }
            std::string word = ident_at(masked_, i);
            bool is_abstract = false;
            std::size_t kw_pos = i;
            if (word == "abstract") {
                std::size_t next = skip_ws(masked_, i + word.size());
                std::string next_word = ident_at(masked_, next);
                if (next_word == "contract") {
                    is_abstract = true;
                    kw_pos = next;
                    word = next_word;
                }
            }
            if (word == "contract" || word == "interface" || word == "library") {
                i = parse_contract(out, kw_pos, word, is_abstract);
                continue;
            }
            i += word.size();
        }
        return out;
    }

private:
    int line_at(std::size_t pos) const { return line_of(lines_, pos); }

    [[noreturn]] void fail(std::size_t pos, const std::string& what) const
    {
        throw ParseError(path_, line_at(pos), what);
    }

    std::size_t parse_contract(ParsedFile& out, std::size_t kw_pos, const std::string& kw,
                               bool is_abstract)
    {
        RawContract rc;
        std::size_t p = skip_ws(masked_, kw_pos + kw.size());
        rc.def.name = ident_at(masked_, p);
        if (rc.def.name.empty())
            fail(p, "expected " + kw + " name");
        rc.def.kind = kw == "interface" ? ContractKind::Interface
                    : kw == "library"   ? ContractKind::Library
                    : is_abstract       ? ContractKind::AbstractContract
                                        : ContractKind::Contract;
        rc.def.file = path_;
        rc.def.start_line = line_at(kw_pos);

        p += rc.def.name.size();
        std::size_t body_open = masked_.find('{', p);
        if (body_open == std::string::npos)
            fail(kw_pos, "missing body for " + kw + " " + rc.def.name);

        // inheritance list between "is" and '{'
        std::size_t is_pos = p;
        while (is_pos < body_open) {
            if (word_at(masked_, is_pos, "is")) {
                for (const auto& piece :
                     split_top_level(masked_.substr(is_pos + 2, body_open - is_pos - 2), ',')) {
                    auto toks = tokenize(piece);
                    if (!toks.empty() && toks.front().is_ident)
                        rc.def.bases.push_back(toks.front().text);
                }
                break;
            }
            ++is_pos;
        }

        std::size_t body_close = match_delim(masked_, body_open);
        if (body_close == std::string::npos)
            fail(body_open, "unbalanced braces in " + kw + " " + rc.def.name);
        rc.def.end_line = line_at(body_close);

        parse_members(rc, body_open + 1, body_close);
        out.contracts.push_back(std::move(rc));
        return body_close + 1;
    }

    void parse_members(RawContract& rc, std::size_t begin, std::size_t end)
    {
        std::size_t i = begin;
        while (i < end) {
            char c = masked_[i];
            if (std::isspace(static_cast<unsigned char>(c)) || c == ';') {
                ++i;
                continue;
            }
            if (!is_ident_start(c)) {
                // stray punctuation at member level; step over
                ++i;
                continue;
            }
            std::string word = ident_at(masked_, i);
            if (word == "function" || word == "modifier" || word == "constructor" ||
                word == "receive" || word == "fallback") {
                i = parse_function_like(rc, i, word, end);
            } else if (word == "using") {
                std::size_t p = skip_ws(masked_, i + word.size());
                std::string lib = ident_at(masked_, p);
                if (!lib.empty())
                    rc.using_libraries.push_back(lib);
                i = statement_end(i, end) + 1;
            } else if (word == "struct" || word == "enum") {
                std::size_t open = masked_.find('{', i);
                if (open == std::string::npos || open >= end)
                    fail(i, "malformed " + word);
                std::size_t close = match_delim(masked_, open);
                if (close == std::string::npos)
                    fail(open, "unbalanced braces in " + word);
                i = close + 1;
            } else if (word == "event" || word == "error") {
                i = statement_end(i, end) + 1;
            } else {
                std::size_t semi = statement_end(i, end);
                parse_state_variable(rc, i, semi);
                i = semi + 1;
            }
        }
    }

    /// Next ';' outside any bracket nesting, bounded by end.
    std::size_t statement_end(std::size_t from, std::size_t end) const
    {
        int depth = 0;
        for (std::size_t i = from; i < end; ++i) {
            char c = masked_[i];
            if (c == '(' || c == '[' || c == '{')
                ++depth;
            else if (c == ')' || c == ']' || c == '}')
                --depth;
            else if (c == ';' && depth == 0)
                return i;
        }
        return end;
    }

    std::size_t parse_function_like(RawContract& rc, std::size_t kw_pos, const std::string& kw,
                                    std::size_t end)
    {
        std::size_t p = skip_ws(masked_, kw_pos + kw.size());
        std::string name;
        if (kw == "function" || kw == "modifier") {
            name = ident_at(masked_, p);
            if (name.empty())
                fail(p, "expected " + kw + " name");
            p = skip_ws(masked_, p + name.size());
        } else {
            name = kw;
        }

        std::size_t params_begin = 0, params_close = 0;
        if (p < end && masked_[p] == '(') {
            params_begin = p + 1;
            params_close = match_delim(masked_, p);
            if (params_close == std::string::npos || params_close >= end)
                fail(p, "unbalanced parameter list of " + name);
            p = params_close + 1;
        } else if (kw != "modifier") {
            fail(p, "expected parameter list of " + name);
        }

        // header runs to the body '{' or a ';' at paren depth 0
        std::size_t header_end = p;
        int depth = 0;
        std::size_t body_open = std::string::npos;
        bool bodyless = false;
        for (std::size_t i = p; i < end; ++i) {
            char c = masked_[i];
            if (c == '(')
                ++depth;
            else if (c == ')')
                --depth;
            else if (c == '{' && depth == 0) {
                body_open = i;
                header_end = i;
                break;
            } else if (c == ';' && depth == 0) {
                bodyless = true;
                header_end = i;
                break;
            }
        }
        if (body_open == std::string::npos && !bodyless)
            fail(kw_pos, "missing body of " + name);

        if (bodyless)
            return header_end + 1; // declaration only; not cataloged

        std::size_t body_close = match_delim(masked_, body_open);
        if (body_close == std::string::npos || body_close > end)
            fail(body_open, "unbalanced braces in " + name);

        std::string params_text =
            params_close > params_begin ? masked_.substr(params_begin, params_close - params_begin)
                                        : std::string();
        HeaderInfo header = parse_header_tail(masked_, params_close ? params_close + 1 : p, header_end);

        if (kw == "modifier") {
            ModifierDef m;
            m.simple_name = name;
            m.contract = rc.def.name;
            m.qualified_name = rc.def.name + "." + name;
            m.parameters = parse_parameter_list(params_text);
            m.file = path_;
            m.start_line = line_at(kw_pos);
            m.end_line = line_at(body_close);
            m.body_text = raw_.substr(kw_pos, body_close + 1 - kw_pos);
            rc.modifiers.push_back(std::move(m));
        } else {
            RawFunction rf;
            rf.def.simple_name = name;
            rf.def.contract = rc.def.name;
            rf.def.qualified_name = rc.def.name + "." + name;
            rf.def.visibility = header.visibility;
            rf.def.is_underscored = !name.empty() && name[0] == '_';
            rf.def.parameters = parse_parameter_list(params_text);
            rf.def.modifiers = header.modifiers;
            rf.def.file = path_;
            rf.def.start_line = line_at(kw_pos);
            rf.def.end_line = line_at(body_close);
            rf.def.body_text = raw_.substr(kw_pos, body_close + 1 - kw_pos);
            rf.def.is_constructor = kw == "constructor" || name == rc.def.name;
            bool is_initializer = name == "initialize";
            for (const auto& mod : header.modifiers)
                if (mod == "initializer")
                    is_initializer = true;
            rf.def.is_constructor_or_initializer = rf.def.is_constructor || is_initializer;
            rf.body_begin = body_open + 1;
            rf.body_end = body_close;
            rf.return_type = header.return_type;
            rc.functions.push_back(std::move(rf));
        }
        return body_close + 1;
    }

    void parse_state_variable(RawContract& rc, std::size_t begin, std::size_t semi)
    {
        std::string stmt = masked_.substr(begin, semi - begin);
        // cut the initializer at a top-level '='
        int depth = 0;
        for (std::size_t i = 0; i < stmt.size(); ++i) {
            char c = stmt[i];
            if (c == '(' || c == '[')
                ++depth;
            else if (c == ')' || c == ']')
                --depth;
            else if (c == '=' && depth == 0 && (i + 1 >= stmt.size() || stmt[i + 1] != '>')) {
                stmt = stmt.substr(0, i);
                break;
            }
        }

        StateVariable v;
        v.contract = rc.def.name;
        v.file = path_;
        v.line = line_at(begin);

        std::vector<Token> toks;
        for (auto& t : tokenize(stmt)) {
            if (t.is_ident &&
                (t.text == "public" || t.text == "private" || t.text == "internal")) {
                v.is_public = t.text == "public";
                continue;
            }
            if (t.is_ident && (t.text == "constant" || t.text == "immutable" ||
                               t.text == "override" || t.text == "transient"))
                continue;
            toks.push_back(std::move(t));
        }
        if (toks.size() < 2 || !toks.back().is_ident)
            return; // not a variable declaration we model
        v.name = toks.back().text;
        toks.pop_back();
        v.type_text = join_type_tokens(toks);
        if (v.type_text.empty())
            return;
        rc.def.state_variables.push_back(std::move(v));
    }

public:
    const std::string& masked() const { return masked_; }
    const std::string& raw() const { return raw_; }

private:
    std::string path_;
    std::string raw_;
    std::string masked_;
    std::vector<std::size_t> lines_;
};

const std::set<std::string>& call_exclusions()
{
    static const std::set<std::string> kw = {
        "if",       "else",     "for",      "while",       "do",          "return",
        "returns",  "emit",     "revert",   "require",     "assert",      "new",
        "delete",   "unchecked","assembly", "function",    "modifier",    "catch",
        "try",      "using",    "pragma",   "import",      "is",          "constructor",
        "receive",  "fallback", "keccak256","sha256",      "ripemd160",   "ecrecover",
        "addmod",   "mulmod",   "selfdestruct", "suicide", "blockhash",   "gasleft",
        "type",     "payable",  "address",  "bool",        "string",      "bytes",
        "abi",      "msg",      "block",    "tx",          "super",       "this",
        "mapping",  "emit",
    };
    return kw;
}

bool looks_like_type_cast(const std::string& name)
{
    return is_elementary_type(canonical_type_token(name));
}

struct CallSite {
    std::string receiver; // empty, "this", "super", or an identifier
    std::string callee;
    int arg_count = 0;
};

/// Identifier-followed-by-argument-list scan over a masked body.
/// Assembly blocks produce no call sites.
std::vector<CallSite> scan_call_sites(const std::string& masked, std::size_t begin, std::size_t end)
{
    std::string body = masked.substr(begin, end - begin);
    // blank out assembly blocks
    std::size_t a = 0;
    while ((a = body.find("assembly", a)) != std::string::npos) {
        if (!word_at(body, a, "assembly")) {
            ++a;
            continue;
        }
        std::size_t open = body.find('{', a);
        if (open == std::string::npos)
            break;
        std::size_t close = match_delim(body, open);
        if (close == std::string::npos)
            break;
        for (std::size_t i = a; i <= close; ++i)
            if (body[i] != '\n')
                body[i] = ' ';
        a = close + 1;
    }

    std::vector<CallSite> sites;
    std::size_t i = 0;
    while (i < body.size()) {
        if (!is_ident_start(body[i])) {
            ++i;
            continue;
        }
        std::string name = ident_at(body, i);
        std::size_t after = skip_ws(body, i + name.size());
        if (after >= body.size() || body[after] != '(') {
            i += name.size();
            continue;
        }
        if (call_exclusions().count(name) || looks_like_type_cast(name)) {
            i += name.size();
            continue;
        }
        CallSite site;
        site.callee = name;
        // receiver: the identifier directly before a '.'
        std::size_t b = i;
        while (b > 0 && std::isspace(static_cast<unsigned char>(body[b - 1])))
            --b;
        if (b > 0 && body[b - 1] == '.') {
            std::size_t r_end = b - 1;
            while (r_end > 0 && std::isspace(static_cast<unsigned char>(body[r_end - 1])))
                --r_end;
            std::size_t r_begin = r_end;
            while (r_begin > 0 && is_ident_char(body[r_begin - 1]))
                --r_begin;
            if (r_begin < r_end && is_ident_start(body[r_begin]))
                site.receiver = body.substr(r_begin, r_end - r_begin);
            else
                site.receiver = "?"; // chained/complex receiver: unresolvable
        }
        std::size_t close = match_delim(body, after);
        if (close == std::string::npos) {
            i += name.size();
            continue;
        }
        std::string args = body.substr(after + 1, close - after - 1);
        site.arg_count = trim(args).empty()
                             ? 0
                             : static_cast<int>(split_top_level(args, ',').size());
        sites.push_back(std::move(site));
        i += name.size();
    }
    return sites;
}

} // namespace

std::string to_string(Visibility v)
{
    switch (v) {
    case Visibility::Public: return "public";
    case Visibility::External: return "external";
    case Visibility::Internal: return "internal";
    case Visibility::Private: return "private";
    }
    return "public";
}

std::string CallableDescriptor::signature() const
{
    std::string s = contract + "." + name + "(";
    for (std::size_t i = 0; i < parameter_types.size(); ++i) {
        if (i)
            s += ",";
        s += parameter_types[i];
    }
    s += ")";
    if (!return_type.empty())
        s += " -> " + return_type;
    return s;
}

std::vector<std::pair<FunctionId, FunctionId>> CallGraph::edges() const
{
    std::vector<std::pair<FunctionId, FunctionId>> out;
    for (FunctionId from = 0; from < callees.size(); ++from)
        for (FunctionId to : callees[from])
            out.emplace_back(from, to);
    return out;
}

void SourceModel::build_lookup()
{
    by_simple_name_.clear();
    by_qualified_name_.clear();
    for (FunctionId id = 0; id < functions.size(); ++id) {
        by_simple_name_.emplace(functions[id].simple_name, id);
        by_qualified_name_.emplace(functions[id].qualified_name, id);
    }
}

std::optional<FunctionId> SourceModel::find_function(const std::string& name) const
{
    auto q = by_qualified_name_.find(name);
    if (q != by_qualified_name_.end())
        return q->second;
    auto range = by_simple_name_.equal_range(name);
    if (range.first != range.second)
        return range.first->second;
    return std::nullopt;
}

std::vector<FunctionId> SourceModel::functions_named(const std::string& simple_name) const
{
    std::vector<FunctionId> ids;
    auto range = by_simple_name_.equal_range(simple_name);
    for (auto it = range.first; it != range.second; ++it)
        ids.push_back(it->second);
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool SourceModel::has_function(const std::string& name) const
{
    return find_function(name).has_value();
}

std::optional<FunctionId> SourceModel::function_at(const std::string& file, int line) const
{
    for (FunctionId id = 0; id < functions.size(); ++id) {
        const auto& f = functions[id];
        if (f.file == file && f.start_line <= line && line <= f.end_line)
            return id;
    }
    return std::nullopt;
}

namespace {

const ContractDef* contract_named(const SourceModel& model, const std::string& name)
{
    for (const auto& c : model.contracts)
        if (c.name == name)
            return &c;
    return nullptr;
}

/// Contract plus transitive bases, BFS over the declared order.
std::vector<const ContractDef*> scope_chain(const SourceModel& model, const ContractDef& start)
{
    std::vector<const ContractDef*> chain;
    std::set<std::string> seen;
    std::vector<const ContractDef*> queue{&start};
    seen.insert(start.name);
    while (!queue.empty()) {
        const ContractDef* c = queue.front();
        queue.erase(queue.begin());
        chain.push_back(c);
        for (const auto& base : c->bases) {
            if (seen.count(base))
                continue;
            seen.insert(base);
            if (const ContractDef* b = contract_named(model, base))
                queue.push_back(b);
        }
    }
    return chain;
}

} // namespace

std::optional<ModifierId> SourceModel::find_modifier_for(FunctionId fn,
                                                         const std::string& simple_name) const
{
    const ContractDef* home = contract_named(*this, functions[fn].contract);
    if (!home)
        return std::nullopt;
    for (const ContractDef* c : scope_chain(*this, *home))
        for (ModifierId mid : c->modifier_ids)
            if (modifier_defs[mid].simple_name == simple_name)
                return mid;
    return std::nullopt;
}

std::vector<ModifierId> SourceModel::modifiers_of(FunctionId fn) const
{
    std::vector<ModifierId> out;
    for (const auto& name : functions[fn].modifiers)
        if (auto mid = find_modifier_for(fn, name))
            if (std::find(out.begin(), out.end(), *mid) == out.end())
                out.push_back(*mid);
    return out;
}

namespace {

std::optional<FunctionId> resolve_in_chain(const SourceModel& model,
                                           const std::vector<const ContractDef*>& chain,
                                           const std::string& name, int arg_count)
{
    std::vector<FunctionId> loose;
    for (const ContractDef* c : chain) {
        std::vector<FunctionId> here;
        for (FunctionId fid : c->function_ids)
            if (model.functions[fid].simple_name == name)
                here.push_back(fid);
        for (FunctionId fid : here)
            if (static_cast<int>(model.functions[fid].parameters.size()) == arg_count)
                return fid;
        loose.insert(loose.end(), here.begin(), here.end());
    }
    if (loose.size() == 1)
        return loose.front();
    return std::nullopt;
}

std::optional<FunctionId> resolve_call(const SourceModel& model, const ContractDef& home,
                                       const CallSite& site)
{
    if (site.receiver == "?")
        return std::nullopt;
    if (site.receiver.empty() || site.receiver == "this") {
        if (auto hit =
                resolve_in_chain(model, scope_chain(model, home), site.callee, site.arg_count))
            return hit;
        if (!site.receiver.empty())
            return std::nullopt; // this.x() stays contract-local
        // then library scope, by simple name; ambiguity drops the edge
        std::vector<FunctionId> lib_hits;
        for (const auto& c : model.contracts) {
            if (c.kind != ContractKind::Library)
                continue;
            for (FunctionId fid : c.function_ids)
                if (model.functions[fid].simple_name == site.callee)
                    lib_hits.push_back(fid);
        }
        if (lib_hits.size() == 1)
            return lib_hits.front();
        return std::nullopt;
    }
    if (site.receiver == "super") {
        auto chain = scope_chain(model, home);
        chain.erase(chain.begin());
        return resolve_in_chain(model, chain, site.callee, site.arg_count);
    }
    // explicit Contract.f() / Library.f()
    if (const ContractDef* target = contract_named(model, site.receiver))
        return resolve_in_chain(model, scope_chain(model, *target), site.callee, site.arg_count);
    return std::nullopt;
}

void import_callgraph(SourceModel& model, const std::string& path)
{
    model.graph.callees.assign(model.functions.size(), {});
    model.graph.callers.assign(model.functions.size(), {});
    std::set<std::pair<FunctionId, FunctionId>> edges;
    auto lines = split_lines(read_file(path));
    int lineno = 0;
    for (const auto& line : lines) {
        ++lineno;
        if (trim(line).empty())
            continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("caller") || !rec.contains("callee"))
            throw ParseError(path, lineno, "expected {\"caller\":..., \"callee\":...}");
        auto caller = model.find_function(rec["caller"].get<std::string>());
        auto callee = model.find_function(rec["callee"].get<std::string>());
        if (!caller || !callee) {
            log_warn("call-graph import: dropping edge with unknown endpoint at " + path + ":" +
                     std::to_string(lineno));
            continue;
        }
        edges.emplace(*caller, *callee);
    }
    for (auto [from, to] : edges) {
        model.graph.callees[from].push_back(to);
        model.graph.callers[to].push_back(from);
    }
}

} // namespace

SourceModel parse_project(const std::string& root, const ParseOptions& options)
{
    if (!fs::exists(root) || !fs::is_directory(root))
        throw ParseError(root, 0, "project root does not exist");

    std::vector<std::string> paths;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".sol")
            continue;
        paths.push_back(fs::relative(entry.path(), root).generic_string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
        throw ParseError(root, 0, "no Solidity files under project root");

    SourceModel model;
    model.root = root;

    struct BodyRef {
        FunctionId fn;
        std::size_t file_index;
        std::size_t begin;
        std::size_t end;
    };
    std::vector<BodyRef> bodies;
    std::vector<std::string> masked_files;

    std::size_t total_contracts = 0;
    for (const auto& rel : paths) {
        FileParser parser(rel, read_file((fs::path(root) / rel).string()));
        ParsedFile parsed = parser.parse();
        masked_files.push_back(parser.masked());
        std::size_t file_index = model.files.size();
        model.files.push_back(parsed.file);
        if (!model.metadata.compiler_version && parsed.file.pragma_version)
            model.metadata.compiler_version = parsed.file.pragma_version;
        for (auto& rc : parsed.contracts) {
            ++total_contracts;
            ContractDef cdef = rc.def;
            for (auto& rf : rc.functions) {
                FunctionId fid = model.functions.size();
                cdef.function_ids.push_back(fid);
                bodies.push_back({fid, file_index, rf.body_begin, rf.body_end});
                model.functions.push_back(std::move(rf.def));
            }
            for (auto& m : rc.modifiers) {
                ModifierId mid = model.modifier_defs.size();
                cdef.modifier_ids.push_back(mid);
                model.modifier_defs.push_back(std::move(m));
            }
            model.contracts.push_back(std::move(cdef));
        }
    }
    if (total_contracts == 0)
        throw ParseError(root, 0, "no contracts found in project");

    model.build_lookup();

    std::string remap_path = (fs::path(root) / "remappings.txt").string();
    if (fs::exists(remap_path))
        for (const auto& line : split_lines(read_file(remap_path)))
            if (!trim(line).empty())
                model.metadata.remappings.push_back(trim(line));

    if (options.callgraph_import) {
        import_callgraph(model, *options.callgraph_import);
        return model;
    }

    model.graph.node_count = model.functions.size();
    model.graph.callees.assign(model.functions.size(), {});
    model.graph.callers.assign(model.functions.size(), {});
    std::set<std::pair<FunctionId, FunctionId>> edges;
    for (const auto& body : bodies) {
        const FunctionDef& caller = model.functions[body.fn];
        const ContractDef* home = contract_named(model, caller.contract);
        if (!home || body.end <= body.begin)
            continue;
        for (const auto& site :
             scan_call_sites(masked_files[body.file_index], body.begin, body.end)) {
            if (auto callee = resolve_call(model, *home, site))
                edges.emplace(body.fn, *callee);
        }
    }
    for (auto [from, to] : edges) {
        model.graph.callees[from].push_back(to);
        model.graph.callers[to].push_back(from);
    }
    return model;
}

namespace {

struct GetterShape {
    std::vector<std::string> params;
    std::string value_type;
    bool ok = false;
};

GetterShape getter_shape(const std::string& type_text)
{
    GetterShape shape;
    std::string t = type_text;
    while (true) {
        if (starts_with(t, "mapping(")) {
            std::size_t close = match_delim(t, 7);
            if (close == std::string::npos)
                return shape;
            std::string inner = t.substr(8, close - 8);
            // key up to the top-level "=>"
            int depth = 0;
            std::size_t arrow = std::string::npos;
            for (std::size_t i = 0; i + 1 < inner.size(); ++i) {
                char c = inner[i];
                if (c == '(' || c == '[')
                    ++depth;
                else if (c == ')' || c == ']')
                    --depth;
                else if (c == '=' && inner[i + 1] == '>' && depth == 0) {
                    arrow = i;
                    break;
                }
            }
            if (arrow == std::string::npos)
                return shape;
            shape.params.push_back(trim(inner.substr(0, arrow)));
            t = trim(inner.substr(arrow + 2));
            continue;
        }
        if (!t.empty() && t.back() == ']') {
            std::size_t open = t.rfind('[');
            if (open == std::string::npos)
                return shape;
            shape.params.push_back("uint256");
            t = trim(t.substr(0, open));
            continue;
        }
        break;
    }
    if (!is_elementary_type(t))
        return shape;
    shape.value_type = t;
    shape.ok = true;
    return shape;
}

} // namespace

std::vector<CallableDescriptor> public_abi(const SourceModel& model)
{
    std::vector<CallableDescriptor> abi;
    for (const auto& contract : model.contracts) {
        // libraries and interfaces are not transaction entry points
        if (contract.kind == ContractKind::Library || contract.kind == ContractKind::Interface)
            continue;
        for (FunctionId fid : contract.function_ids) {
            const FunctionDef& f = model.functions[fid];
            if (f.is_constructor || f.simple_name == "receive" || f.simple_name == "fallback")
                continue;
            if (f.visibility != Visibility::Public && f.visibility != Visibility::External)
                continue;
            CallableDescriptor d;
            d.kind = CallableDescriptor::Kind::Function;
            d.contract = contract.name;
            d.name = f.simple_name;
            for (const auto& p : f.parameters)
                d.parameter_types.push_back(p.type_text);
            abi.push_back(std::move(d));
        }
        for (const auto& var : contract.state_variables) {
            if (!var.is_public)
                continue;
            GetterShape shape = getter_shape(var.type_text);
            if (!shape.ok) {
                log_note("skipping getter for " + contract.name + "." + var.name +
                         ": unsupported type " + var.type_text);
                continue;
            }
            CallableDescriptor d;
            d.kind = CallableDescriptor::Kind::Getter;
            d.contract = contract.name;
            d.name = var.name;
            d.parameter_types = shape.params;
            d.return_type = shape.value_type;
            abi.push_back(std::move(d));
        }
    }
    return abi;
}

std::vector<ScannedFunction> scan_function_definitions(const std::string& text)
{
    std::vector<ScannedFunction> out;
    const std::string masked = mask_comments_and_strings(text);
    std::size_t pos = 0;
    while ((pos = masked.find("function", pos)) != std::string::npos) {
        bool boundary_left = pos == 0 || !is_ident_char(masked[pos - 1]);
        std::size_t after = pos + 8;
        bool boundary_right = after >= masked.size() || !is_ident_char(masked[after]);
        if (!boundary_left || !boundary_right) {
            pos = after;
            continue;
        }
        std::size_t cursor = skip_ws(masked, after);
        std::string name = ident_at(masked, cursor);
        if (name.empty()) {
            pos = after;
            continue;
        }
        cursor = skip_ws(masked, cursor + name.size());
        if (cursor >= masked.size() || masked[cursor] != '(') {
            pos = after;
            continue;
        }
        int depth = 0;
        std::size_t params_begin = cursor + 1;
        std::size_t params_end = params_begin;
        for (std::size_t i = cursor; i < masked.size(); ++i) {
            if (masked[i] == '(')
                ++depth;
            else if (masked[i] == ')' && --depth == 0) {
                params_end = i;
                break;
            }
        }
        if (params_end == params_begin && depth != 0) {
            pos = after;
            continue;
        }

        // Body: first top-level '{' (brace-matched) or a terminating ';'.
        std::size_t body_end = std::string::npos;
        std::size_t scan = params_end + 1;
        int braces = 0;
        for (std::size_t i = scan; i < masked.size(); ++i) {
            char c = masked[i];
            if (c == '{') {
                ++braces;
            } else if (c == '}') {
                if (--braces == 0) {
                    body_end = i + 1;
                    break;
                }
            } else if (c == ';' && braces == 0) {
                body_end = i + 1;
                break;
            }
        }
        if (body_end == std::string::npos) {
            pos = after;
            continue;
        }

        ScannedFunction fn;
        fn.simple_name = name;
        for (const auto& p :
             parse_parameter_list(masked.substr(params_begin, params_end - params_begin)))
            fn.parameter_types.push_back(p.type_text);
        fn.begin = pos;
        fn.end = body_end;
        out.push_back(std::move(fn));
        pos = body_end;
    }
    return out;
}

bool has_contract_with_body(const std::string& text)
{
    const std::string masked = mask_comments_and_strings(text);
    std::size_t pos = 0;
    while ((pos = masked.find("contract", pos)) != std::string::npos) {
        bool boundary_left = pos == 0 || !is_ident_char(masked[pos - 1]);
        std::size_t after = pos + 8;
        bool boundary_right = after >= masked.size() || !is_ident_char(masked[after]);
        if (!boundary_left || !boundary_right) {
            pos = after;
            continue;
        }
        std::size_t cursor = skip_ws(masked, after);
        if (ident_at(masked, cursor).empty()) {
            pos = after;
            continue;
        }
        auto brace = masked.find('{', cursor);
        auto semi = masked.find(';', cursor);
        if (brace != std::string::npos && (semi == std::string::npos || brace < semi))
            return true;
        pos = after;
    }
    return false;
}

} // namespace smartpoc
