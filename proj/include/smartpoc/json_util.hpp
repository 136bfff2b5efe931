#pragma once

#include "json.hpp"

#include <optional>
#include <string>

namespace smartpoc {

/// Best-effort extraction of a JSON payload from an LLM reply: the
/// whole trimmed text, else the first fenced block, else the widest
/// bracket-delimited substring. Returns nothing when no parse succeeds.
std::optional<nlohmann::json> find_json_payload(const std::string& reply_text);

} // namespace smartpoc
