#include "smartpoc/json_util.hpp"

#include "smartpoc/llm.hpp"
#include "smartpoc/text_util.hpp"

namespace smartpoc {

namespace {

std::optional<nlohmann::json> try_parse(const std::string& text)
{
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded())
        return std::nullopt;
    return doc;
}

} // namespace

std::optional<nlohmann::json> find_json_payload(const std::string& reply_text)
{
    std::string trimmed = trim(reply_text);
    if (auto doc = try_parse(trimmed))
        return doc;

    LlmReply wrapper;
    wrapper.text = reply_text;
    if (reply_text.find("```") != std::string::npos)
        if (auto doc = try_parse(trim(extract_code_block(wrapper))))
            return doc;

    for (char open : {'[', '{'}) {
        char close = open == '[' ? ']' : '}';
        auto begin = reply_text.find(open);
        auto end = reply_text.rfind(close);
        if (begin == std::string::npos || end == std::string::npos || end <= begin)
            continue;
        if (auto doc = try_parse(reply_text.substr(begin, end - begin + 1)))
            return doc;
    }
    return std::nullopt;
}

} // namespace smartpoc
