#include "engage/dialogue.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "engage/error.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

std::string_view to_string(Role role) { return role == Role::User ? "user" : "model"; }

std::string_view to_string(Scenario scenario) {
  return scenario == Scenario::EmotionalSupport ? "emotional_support" : "persuasion";
}

Role parse_role(std::string_view text) {
  if (text == "user") return Role::User;
  if (text == "model") return Role::Model;
  throw EngageError(ErrorKind::ParseError, "unknown role '" + std::string(text) + "'");
}

Scenario parse_scenario(std::string_view text) {
  if (text == "emotional_support") return Scenario::EmotionalSupport;
  if (text == "persuasion") return Scenario::Persuasion;
  throw EngageError(ErrorKind::ParseError, "unknown scenario '" + std::string(text) + "'");
}

// --- StructuredState --------------------------------------------------------

namespace {

constexpr std::string_view kLabels[4] = {"Observations", "Feelings", "Needs", "Requests"};

std::vector<std::string>* field_for(StructuredState& s, std::size_t index) {
  switch (index) {
    case 0: return &s.observations;
    case 1: return &s.feelings;
    case 2: return &s.needs;
    default: return &s.requests;
  }
}

const std::vector<std::string>& field_for(const StructuredState& s, std::size_t index) {
  return *field_for(const_cast<StructuredState&>(s), index);
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

bool StructuredState::empty() const {
  return observations.empty() && feelings.empty() && needs.empty() && requests.empty();
}

bool StructuredState::same_phrases(const StructuredState& other) const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (sorted(field_for(*this, i)) != sorted(field_for(other, i))) return false;
  }
  return true;
}

std::string StructuredState::content_text() const {
  std::string out;
  for (std::size_t i = 0; i < 4; ++i) {
    for (const auto& phrase : field_for(*this, i)) {
      if (!out.empty()) out += "; ";
      out += phrase;
    }
  }
  return out;
}

std::string StructuredState::to_block() const {
  std::string out;
  for (std::size_t i = 0; i < 4; ++i) {
    out += kLabels[i];
    out += ':';
    const auto& phrases = field_for(*this, i);
    for (std::size_t k = 0; k < phrases.size(); ++k) {
      const auto& p = phrases[k];
      if (p.find(';') != std::string::npos || p.find('\n') != std::string::npos ||
          trim(p) != p || p.empty()) {
        throw EngageError(ErrorKind::InvalidArgument,
                          "state phrase cannot be represented in a block: '" + p + "'");
      }
      out += k == 0 ? " " : "; ";
      out += p;
    }
    if (i < 3) out += '\n';
  }
  return out;
}

StructuredState StructuredState::from_block(std::string_view block) {
  StructuredState state;
  std::size_t pos = 0;
  while (pos <= block.size()) {
    auto end = block.find('\n', pos);
    if (end == std::string_view::npos) end = block.size();
    const std::string line = trim(block.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;

    // Accept ASCII ':' and the full-width colon used by Chinese annotations.
    std::size_t colon = line.find(':');
    std::size_t colon_len = 1;
    const auto wide = line.find("\xEF\xBC\x9A");
    if (wide != std::string::npos && (colon == std::string::npos || wide < colon)) {
      colon = wide;
      colon_len = 3;
    }
    if (colon == std::string::npos) {
      throw EngageError(ErrorKind::ParseError, "state line without label: '" + line + "'");
    }
    const std::string label = to_lower(trim(std::string_view(line).substr(0, colon)));
    std::size_t index = 4;
    for (std::size_t i = 0; i < 4; ++i) {
      if (label == to_lower(kLabels[i])) index = i;
    }
    if (index == 4) {
      throw EngageError(ErrorKind::ParseError, "unknown state label '" + label + "'");
    }
    auto* field = field_for(state, index);
    std::string_view rest = std::string_view(line).substr(colon + colon_len);
    std::size_t p = 0;
    while (p <= rest.size()) {
      auto semi = rest.find(';', p);
      if (semi == std::string_view::npos) semi = rest.size();
      auto phrase = trim(rest.substr(p, semi - p));
      if (!phrase.empty()) field->push_back(std::move(phrase));
      p = semi + 1;
    }
  }
  return state;
}

// --- UserCondition / Turn ---------------------------------------------------

void UserCondition::validate() const {
  if (trim(description).empty()) {
    throw EngageError(ErrorKind::InvalidArgument, "user condition description is empty");
  }
}

Turn::Turn(Role role_in, std::string text_in, std::optional<StructuredState> state_in)
    : role(role_in), text(std::move(text_in)), state(std::move(state_in)) {
  if (trim(text).empty()) {
    throw EngageError(ErrorKind::InvalidArgument, "turn text is empty");
  }
}

bool alternates(std::span<const Turn> turns) {
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Role expected = (i % 2 == 0) ? Role::User : Role::Model;
    if (turns[i].role != expected) return false;
  }
  return true;
}

void validate_alternation(std::span<const Turn> turns) {
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Role expected = (i % 2 == 0) ? Role::User : Role::Model;
    if (turns[i].role != expected) {
      throw EngageError(ErrorKind::RoleViolation,
                        "turn " + std::to_string(i) + " has role " +
                            std::string(to_string(turns[i].role)) + ", expected " +
                            std::string(to_string(expected)));
    }
  }
}

void validate_context_for(Role responder, std::span<const Turn> context) {
  validate_alternation(context);
  const bool user_next = context.size() % 2 == 0;
  if ((responder == Role::User) != user_next) {
    throw EngageError(ErrorKind::RoleViolation,
                      std::string(to_string(responder)) + " cannot respond after a " +
                          (context.empty() ? std::string("empty context")
                                           : std::string(to_string(context.back().role)) +
                                                 " turn"));
  }
}

// --- Conversation -----------------------------------------------------------

Conversation::Conversation(std::string id, UserCondition condition, std::vector<Turn> turns)
    : id_(std::move(id)), condition_(std::move(condition)), turns_(std::move(turns)) {
  condition_.validate();
  validate_alternation(turns_);
}

Conversation append_turn(const Conversation& conv, Turn turn) {
  const Role expected = conv.size() % 2 == 0 ? Role::User : Role::Model;
  if (turn.role != expected) {
    throw EngageError(ErrorKind::RoleViolation,
                      "cannot append a " + std::string(to_string(turn.role)) +
                          " turn; expected " + std::string(to_string(expected)));
  }
  auto turns = conv.turns();
  turns.push_back(std::move(turn));
  return Conversation(conv.id(), conv.condition(), std::move(turns));
}

std::vector<Turn> context_for_model(const Conversation& conv) {
  if (!conv.empty() && conv.turns().back().role == Role::Model) {
    throw EngageError(ErrorKind::RoleViolation, "last turn is a model turn");
  }
  return conv.turns();
}

// --- JSON -------------------------------------------------------------------

void to_json(json& j, const StructuredState& s) {
  j = json{{"observations", s.observations},
           {"feelings", s.feelings},
           {"needs", s.needs},
           {"requests", s.requests}};
}

void from_json(const json& j, StructuredState& s) {
  detail::require_object(j, "state", {"observations", "feelings", "needs", "requests"});
  s = StructuredState{};
  auto read = [&](const char* key, std::vector<std::string>& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_array()) {
      throw EngageError(ErrorKind::ParseError, std::string("state.") + key + " must be an array");
    }
    for (const auto& item : j.at(key)) out.push_back(detail::get_string(item, std::string_view(key)));
  };
  read("observations", s.observations);
  read("feelings", s.feelings);
  read("needs", s.needs);
  read("requests", s.requests);
}

void to_json(json& j, const UserCondition& c) {
  j = json{{"scenario", to_string(c.scenario)}, {"description", c.description}, {"id", c.id}};
}

void from_json(const json& j, UserCondition& c) {
  detail::require_object(j, "condition", {"scenario", "description", "id"});
  c.scenario = parse_scenario(detail::get_string(j, "scenario"));
  c.description = detail::get_string(j, "description");
  c.id = detail::get_string(j, "id");
  c.validate();
}

void to_json(json& j, const Turn& t) {
  j = json{{"role", to_string(t.role)}, {"text", t.text}};
  if (t.state) j["state"] = *t.state;
}

void from_json(const json& j, Turn& t) {
  detail::require_object(j, "turn", {"role", "text", "state"});
  std::optional<StructuredState> state;
  if (j.contains("state") && !j.at("state").is_null()) state = j.at("state").get<StructuredState>();
  t = Turn(parse_role(detail::get_string(j, "role")), detail::get_string(j, "text"),
           std::move(state));
}

json turns_to_json(std::span<const Turn> turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back(t);
  return arr;
}

std::vector<Turn> turns_from_json(const json& j) {
  if (!j.is_array()) throw EngageError(ErrorKind::ParseError, "turns must be an array");
  std::vector<Turn> turns;
  turns.reserve(j.size());
  for (const auto& item : j) turns.push_back(item.get<Turn>());
  return turns;
}

json conversation_to_json(const Conversation& conv) {
  return json{{"id", conv.id()},
              {"condition", conv.condition()},
              {"turns", turns_to_json(conv.turns())}};
}

Conversation conversation_from_json(const json& j) {
  detail::require_object(j, "conversation", {"id", "condition", "turns"});
  return Conversation(detail::get_string(j, "id"), j.at("condition").get<UserCondition>(),
                      turns_from_json(j.at("turns")));
}

std::vector<Conversation> read_conversations_jsonl(std::istream& in) {
  std::vector<Conversation> out;
  detail::for_each_jsonl(in, [&](const json& j) { out.push_back(conversation_from_json(j)); });
  return out;
}

void write_conversations_jsonl(std::ostream& out, std::span<const Conversation> convs) {
  for (const auto& c : convs) out << conversation_to_json(c).dump() << '\n';
}

std::vector<UserCondition> read_conditions_jsonl(std::istream& in) {
  std::vector<UserCondition> out;
  detail::for_each_jsonl(in, [&](const json& j) { out.push_back(j.get<UserCondition>()); });
  return out;
}

}  // namespace engage
