#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/dialogue.hpp"
#include "engage/engagement.hpp"

namespace engage {

struct EvalConfig {
  int episodes = 1000;
  int turn_cap = 50;  // utterances per conversation
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct EpisodeRecord {
  std::size_t index = 0;
  std::string condition_id;
  std::uint64_t seed = 0;
  int turns = 0;
  bool terminated = false;
  bool engaged = false;
  double level = 0.0;
  double donation = 0.0;  // persuasion only
  bool valid = true;
  std::string error;

  bool operator==(const EpisodeRecord&) const = default;
};

struct EvalReport {
  std::string policy;
  std::size_t episodes = 0;
  std::size_t valid_episodes = 0;
  std::size_t engaged = 0;
  double engaged_rate = 0.0;
  double mean_donation = 0.0;
  double mean_level = 0.0;
  double mean_turns = 0.0;      // engaged episodes only
  double mean_turns_all = 0.0;  // every valid episode
  std::vector<EpisodeRecord> records;

  /// Recomputes every aggregate from `records`.
  static EvalReport from_records(std::string policy, std::vector<EpisodeRecord> records);

  nlohmann::json to_json(bool with_records = true) const;
  /// Throws ParseError if the aggregates disagree with the records.
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

struct EpisodeResult {
  Conversation conversation;
  EngagementOutcome outcome;
};

/// Alternates user and policy turns from an empty conversation until the user
/// ends it or `turn_cap` utterances exist. Agent errors propagate.
EpisodeResult run_episode(const AgentPolicy& user_sim, const AgentPolicy& policy,
                          const UserCondition& condition, std::uint64_t seed, int turn_cap,
                          const EngagementDetector& detector = default_detector());

/// Episode k talks under conditions[k % size] with seed derive_seed(cfg.seed, k).
/// A failing episode is recorded as invalid and does not count as engaged.
EvalReport evaluate(const AgentPolicy& user_sim, const AgentPolicy& policy,
                    std::span<const UserCondition> conditions, const EvalConfig& cfg,
                    const EngagementDetector& detector = default_detector());

}  // namespace engage
