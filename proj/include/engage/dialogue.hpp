#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace engage {

enum class Role { User, Model };
enum class Scenario { EmotionalSupport, Persuasion };

std::string_view to_string(Role role);
std::string_view to_string(Scenario scenario);
Role parse_role(std::string_view text);
Scenario parse_scenario(std::string_view text);

/// Emotional and cognitive state of a user: four labeled phrase lists.
/// Phrases keep their order; use same_phrases() for order-insensitive checks.
struct StructuredState {
  std::vector<std::string> observations;
  std::vector<std::string> feelings;
  std::vector<std::string> needs;
  std::vector<std::string> requests;

  bool empty() const;
  bool same_phrases(const StructuredState& other) const;
  /// All phrases joined, without labels.
  std::string content_text() const;

  /// Labeled block:
  ///   Observations: a; b
  ///   Feelings: ...
  ///   Needs: ...
  ///   Requests: ...
  std::string to_block() const;
  static StructuredState from_block(std::string_view block);

  bool operator==(const StructuredState&) const = default;
};

struct UserCondition {
  Scenario scenario = Scenario::EmotionalSupport;
  std::string description;
  std::string id;

  void validate() const;
  bool operator==(const UserCondition&) const = default;
};

struct Turn {
  Role role = Role::User;
  std::string text;
  std::optional<StructuredState> state;

  Turn() = default;
  Turn(Role role, std::string text, std::optional<StructuredState> state = std::nullopt);

  bool operator==(const Turn&) const = default;
};

/// Throws RoleViolation unless roles alternate starting with a user turn.
void validate_alternation(std::span<const Turn> turns);
bool alternates(std::span<const Turn> turns);

/// Throws RoleViolation unless `context` is a legal input for an agent that
/// produces a turn of role `responder`.
void validate_context_for(Role responder, std::span<const Turn> context);

class Conversation {
 public:
  Conversation(std::string id, UserCondition condition, std::vector<Turn> turns = {});

  const std::string& id() const { return id_; }
  const UserCondition& condition() const { return condition_; }
  const std::vector<Turn>& turns() const { return turns_; }
  std::size_t size() const { return turns_.size(); }
  bool empty() const { return turns_.empty(); }

  bool operator==(const Conversation&) const = default;

 private:
  std::string id_;
  UserCondition condition_;
  std::vector<Turn> turns_;
};

Conversation append_turn(const Conversation& conv, Turn turn);

/// The history an interactive model conditions on: every prior turn of both
/// roles. Empty for an empty conversation.
std::vector<Turn> context_for_model(const Conversation& conv);

/// Anything that produces the next turn of a conversation: user simulators
/// and interactive policies alike.
class AgentPolicy {
 public:
  virtual ~AgentPolicy() = default;

  virtual Role role() const = 0;
  virtual std::string name() const = 0;

  /// Deterministic in (condition, context, seed).
  virtual Turn respond(const UserCondition& condition, std::span<const Turn> context,
                       std::uint64_t seed) const = 0;
};

// JSON mapping (JSONL conversation format).
void to_json(nlohmann::json& j, const StructuredState& s);
void from_json(const nlohmann::json& j, StructuredState& s);
void to_json(nlohmann::json& j, const UserCondition& c);
void from_json(const nlohmann::json& j, UserCondition& c);
void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);
nlohmann::json conversation_to_json(const Conversation& conv);
Conversation conversation_from_json(const nlohmann::json& j);

nlohmann::json turns_to_json(std::span<const Turn> turns);
std::vector<Turn> turns_from_json(const nlohmann::json& j);

/// One JSON object per line. Parse errors carry the 1-based line number.
std::vector<Conversation> read_conversations_jsonl(std::istream& in);
void write_conversations_jsonl(std::ostream& out, std::span<const Conversation> convs);

std::vector<UserCondition> read_conditions_jsonl(std::istream& in);

}  // namespace engage
