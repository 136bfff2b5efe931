#include "smartpoc/text_util.hpp"

#include "smartpoc/errors.hpp"

#include <cctype>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace smartpoc {

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text)
{
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            if (pos < text.size())
                lines.emplace_back(text.substr(pos));
            break;
        }
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.emplace_back(line);
        pos = nl + 1;
    }
    return lines;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.emplace_back(s.substr(pos));
            break;
        }
        out.emplace_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.substr(0, prefix.size()) == prefix;
}

std::string to_lower(std::string_view s)
{
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::size_t count_tokens(std::string_view text)
{
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
        bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!ws && !in_token)
            ++n;
        in_token = !ws;
    }
    return n;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw Error("short write: " + path);
}

std::optional<std::pair<int, int>> version_major_minor(std::string_view version)
{
    auto parse_int = [](std::string_view s, std::size_t& pos) -> std::optional<int> {
        std::size_t start = pos;
        long value = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            value = value * 10 + (s[pos] - '0');
            ++pos;
        }
        if (pos == start || value > 1'000'000)
            return std::nullopt;
        return static_cast<int>(value);
    };
    std::size_t pos = 0;
    auto major = parse_int(version, pos);
    if (!major || pos >= version.size() || version[pos] != '.')
        return std::nullopt;
    ++pos;
    auto minor = parse_int(version, pos);
    if (!minor)
        return std::nullopt;
    return std::make_pair(*major, *minor);
}

namespace {
std::mutex g_log_mutex;
}

void log_note(const std::string& msg)
{
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cerr << "[note] " << msg << "\n";
}

void log_warn(const std::string& msg)
{
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cerr << "[warn] " << msg << "\n";
}

} // namespace smartpoc
