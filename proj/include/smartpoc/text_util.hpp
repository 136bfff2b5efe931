#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smartpoc {

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix);
std::string to_lower(std::string_view s);

/// Whitespace-delimited token count. Used as the documented fallback
/// estimate when a backend reports no usage numbers, and for the
/// bundle-vs-flattened size comparison.
std::size_t count_tokens(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Leading "<major>.<minor>" of a version string like "0.8.19"; nullopt
/// when the text does not start with two dot-separated integers.
std::optional<std::pair<int, int>> version_major_minor(std::string_view version);

/// Minimal stderr logging. The pipeline only ever logs notes and
/// warnings; anything stronger is an exception.
void log_note(const std::string& msg);
void log_warn(const std::string& msg);

} // namespace smartpoc
