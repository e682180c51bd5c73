#include "json_util.hpp"

#include "engage/text.hpp"

namespace engage::detail {

using nlohmann::json;

void require_object(const json& j, std::string_view what,
                    std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) {
    throw EngageError(ErrorKind::ParseError, std::string(what) + " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) {
      throw EngageError(ErrorKind::ParseError,
                        "unknown key '" + item.key() + "' in " + std::string(what));
    }
  }
}

std::string get_string(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw EngageError(ErrorKind::ParseError, std::string("missing key '") + key + "'");
  }
  return get_string(j.at(key), std::string_view(key));
}

std::string get_string(const json& value, std::string_view what) {
  if (!value.is_string()) {
    throw EngageError(ErrorKind::ParseError, std::string(what) + " must be a string");
  }
  return value.get<std::string>();
}

double get_number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw EngageError(ErrorKind::ParseError, std::string("key '") + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

void for_each_jsonl(std::istream& in, const std::function<void(const json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw EngageError(ErrorKind::ParseError,
                        "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const EngageError& e) {
      throw EngageError(ErrorKind::ParseError,
                        "line " + std::to_string(line_no) + ": " + e.message());
    }
  }
}

}  // namespace engage::detail
