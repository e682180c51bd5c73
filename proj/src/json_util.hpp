#pragma once

#include <functional>
#include <initializer_list>
#include <istream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "engage/error.hpp"

namespace engage::detail {

/// Throws ParseError unless `j` is an object whose keys all appear in `allowed`.
void require_object(const nlohmann::json& j, std::string_view what,
                    std::initializer_list<std::string_view> allowed);

std::string get_string(const nlohmann::json& j, const char* key);
std::string get_string(const nlohmann::json& value, std::string_view what);
double get_number(const nlohmann::json& j, const char* key);

/// Calls `fn` for every non-blank line parsed as JSON. Any error is rethrown
/// as ParseError prefixed with the 1-based line number.
void for_each_jsonl(std::istream& in, const std::function<void(const nlohmann::json&)>& fn);

}  // namespace engage::detail
