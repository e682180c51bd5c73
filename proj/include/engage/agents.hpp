#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "engage/dialogue.hpp"
#include "engage/toy_policy.hpp"

namespace engage {

// Toy environments. The mechanics (concerns and patience for the help
// seeker, warmth for the persuadee) exist to make engagement a non-trivial
// planning target at desk scale; they model nothing beyond that.

/// One thing a help seeker may need to get off their chest.
struct SupportTopic {
  std::string key;          // matched as a token in condition descriptions and replies
  std::string feeling;      // listed under "feelings" until expressed
  std::string need;         // listed under "needs" until expressed
  std::string observation;  // what the seeker reports while on this topic
  std::string opening;      // first mention
  std::string restate;      // repeated after an unhelpful reply
};

const std::vector<SupportTopic>& support_topics();
const SupportTopic& support_topic(std::string_view key);

/// Termination marker carried by every terminal help-seeker utterance.
inline constexpr std::string_view kSeekerFarewell = "Goodbye.";

struct SeekerConfig {
  int patience = 4;               // unhelpful replies tolerated before giving up
  double generic_success = 0.5;   // chance an open question draws out the current concern
  std::uint64_t seed = 0;         // mixed into every per-call seed
};

/// Scripted help seeker. Concerns come from the condition description (topic
/// keys in order of first mention). Each user turn carries a StructuredState
/// whose feelings/needs list the concerns not yet expressed; the simulator's
/// progress is read back from the last such state, so respond() is a pure
/// function of (condition, context, seed).
class ScriptedSeekerSimulator final : public AgentPolicy {
 public:
  explicit ScriptedSeekerSimulator(SeekerConfig config = {});

  Role role() const override { return Role::User; }
  std::string name() const override { return "scripted-seeker"; }
  Turn respond(const UserCondition& condition, std::span<const Turn> context,
               std::uint64_t seed) const override;

  const SeekerConfig& config() const { return config_; }

  static std::vector<std::string> concerns_for(const UserCondition& condition);
  /// Number of unhelpful model replies so far, read from the user states.
  static int failures_in(std::span<const Turn> context);

 private:
  SeekerConfig config_;
};

enum class SupportReply { Reflection, OpenQuestion, Other };

/// How the scripted seeker reads a model reply with respect to `topic_key`.
SupportReply classify_support_reply(std::string_view text, std::string_view topic_key);

/// Toy supporter vocabulary: one reflection per support topic, an open
/// question, a piece of advice and a topic change.
std::vector<ToyPolicy::Response> support_vocabulary();

/// Baseline ("SFT") supporter: weak association between the topic word in the
/// user's last turn and the matching reflection.
ToyPolicy make_support_baseline(double prior_strength = 1.0, double temperature = 1.0);

struct PersuadeeConfig {
  int max_warmth = 4;
  int ask_threshold = 2;   // warmth needed for an ask to succeed
  int patience = 8;        // user turns before the persuadee decides regardless
  std::uint64_t seed = 0;
};

/// Scripted persuadee. Warmth rises on new informative or rapport replies and
/// falls on pushy replies and premature asks. Terminal turns always state a
/// dollar amount: 2 * warmth / max_warmth rounded to cents.
class ScriptedPersuadeeSimulator final : public AgentPolicy {
 public:
  explicit ScriptedPersuadeeSimulator(PersuadeeConfig config = {});

  Role role() const override { return Role::User; }
  std::string name() const override { return "scripted-persuadee"; }
  Turn respond(const UserCondition& condition, std::span<const Turn> context,
               std::uint64_t seed) const override;

  const PersuadeeConfig& config() const { return config_; }

  /// key=value pairs separated by ';' or ','.
  static std::map<std::string, std::string> parse_profile(std::string_view description);
  int initial_warmth(const UserCondition& condition) const;
  /// Warmth after replaying every model turn in `context` except a trailing one.
  int warmth_before_last(const UserCondition& condition, std::span<const Turn> context) const;
  double donation_for(int warmth) const;

 private:
  PersuadeeConfig config_;
};

enum class PersuasionReply { Ask, Pushy, Inform, Filler };
PersuasionReply classify_persuasion_reply(std::string_view text);

std::vector<ToyPolicy::Response> persuasion_vocabulary();
ToyPolicy make_persuasion_baseline(double prior_strength = 1.0, double temperature = 1.0);

/// "$2" for whole dollars, "$0.50" otherwise.
std::string format_dollars(double amount);

}  // namespace engage
