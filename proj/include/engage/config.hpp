#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/agents.hpp"
#include "engage/dpo.hpp"
#include "engage/http_policy.hpp"
#include "engage/ixmcts.hpp"
#include "engage/preference.hpp"

namespace engage {

struct UserSpec {
  std::string kind = "scripted";  // "scripted" or "http"
  SeekerConfig seeker;
  PersuadeeConfig persuadee;
  HttpPolicyConfig http;
};

struct PolicySpec {
  std::string kind = "toy";  // "toy" or "http"
  double prior_strength = 1.0;
  double temperature = 1.0;
  std::string path;  // optional toy policy JSON replacing the built-in baseline
  HttpPolicyConfig http;
};

struct DtSpec {
  int retry_cap = 8;
  bool balance = true;
  double ratio = 1.0;
};

struct EvalSpec {
  int episodes = 1000;
  int turn_cap = 0;  // 0: twice the search depth cap
  int bon_n = 3;
};

/// Everything one run needs. Relative paths resolve against `base_dir`.
struct RunConfig {
  Scenario scenario = Scenario::EmotionalSupport;
  std::uint64_t seed = 0;
  std::string conditions;
  std::string eval_conditions;  // defaults to `conditions`
  UserSpec user;
  PolicySpec policy;
  SearchConfig search;
  MiningConfig mining;
  RewardModelHyper reward_model;
  DtSpec dt;
  DpoConfig dpo;
  EvalSpec eval;
  int workers = 1;
  std::string out = "run";
  std::filesystem::path base_dir = ".";

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;
  int eval_turn_cap() const { return eval.turn_cap > 0 ? eval.turn_cap : 2 * search.depth_cap; }

  /// Canonical form without `out` and `base_dir`, so it hashes the same
  /// wherever the run is written.
  nlohmann::json to_json() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

std::unique_ptr<AgentPolicy> make_user_simulator(const RunConfig& cfg);
/// The pre-alignment policy. Throws ConfigError for non-toy policies.
ToyPolicy make_baseline_policy(const RunConfig& cfg);
std::unique_ptr<AgentPolicy> make_model_policy(const RunConfig& cfg);

std::vector<UserCondition> load_conditions(const std::filesystem::path& path);

}  // namespace engage
