#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/dialogue.hpp"
#include "engage/ixmcts.hpp"
#include "engage/toy_policy.hpp"

namespace engage {

enum class PairSource { TreeMined, RewardRanked };

std::string_view to_string(PairSource source);

/// A context ending in a user turn and two model replies to it, the chosen
/// one valued strictly higher.
struct PreferencePair {
  std::vector<Turn> context;
  std::string chosen;
  std::string rejected;
  double chosen_value = 0.0;
  double rejected_value = 0.0;
  PairSource source = PairSource::TreeMined;

  /// Throws InvariantViolation unless chosen_value > rejected_value,
  /// chosen != rejected and the context alternates and ends with a user turn.
  void validate() const;
  bool operator==(const PreferencePair&) const = default;
};

nlohmann::json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);
std::vector<PreferencePair> read_pairs_jsonl(std::istream& in);
void write_pairs_jsonl(std::ostream& out, std::span<const PreferencePair> pairs);

struct MiningConfig {
  int min_visits = 2;
  double value_margin = 0.1;

  void validate() const;
};

/// For every live user node, compares its live model children that have at
/// least `min_visits` visits (children with identical text are merged by
/// summing Q and N) and emits every ordered pair whose value Q/N differs by
/// at least `value_margin`. Children are taken in creation order.
std::vector<PreferencePair> mine_pairs(const DialogueTree& tree, const MiningConfig& cfg);

/// Drops exact duplicates, keeping the first occurrence.
std::vector<PreferencePair> dedupe_pairs(std::vector<PreferencePair> pairs);

double sigmoid(double x);
/// log(1 + e^x) without overflow.
double softplus(double x);

/// Scores a candidate reply in context; higher is better.
using ResponseScorer = std::function<double(std::span<const Turn>, const std::string&)>;

struct RewardModelHyper {
  int steps = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::size_t dimension = 4096;
  std::uint64_t hash_seed = 0;

  void validate() const;
};

/// Linear pairwise reward model over hashed (context token x reply) features:
/// P(a > b | C) = sigmoid(score(C, a) - score(C, b)).
class RewardModel {
 public:
  explicit RewardModel(std::size_t dimension = 4096, std::uint64_t hash_seed = 0);

  SparseFeatures features(std::span<const Turn> context, std::string_view response) const;
  double score(std::span<const Turn> context, std::string_view response) const;
  double preference_probability(std::span<const Turn> context, std::string_view a,
                                std::string_view b) const;
  ResponseScorer scorer() const;

  std::size_t dimension() const { return dimension_; }
  std::uint64_t hash_seed() const { return hash_seed_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> mutable_weights() { return weights_; }
  bool trained() const { return trained_; }
  double final_loss() const { return final_loss_; }
  void mark_trained(double final_loss) {
    trained_ = true;
    final_loss_ = final_loss;
  }

  nlohmann::json to_json() const;
  static RewardModel from_json(const nlohmann::json& j);

 private:
  std::size_t dimension_;
  std::uint64_t hash_seed_;
  std::vector<double> weights_;
  bool trained_ = false;
  double final_loss_ = 0.0;
};

/// Mean pairwise logistic loss plus (l2 / 2) |w|^2.
double reward_model_loss(const RewardModel& rm, std::span<const PreferencePair> pairs, double l2);
std::vector<double> reward_model_grad(const RewardModel& rm, std::span<const PreferencePair> pairs,
                                      double l2);
/// Fraction of pairs where the chosen reply scores strictly higher.
double pair_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs);

/// Full-batch gradient descent from zero weights. Throws EmptyDataset on no
/// pairs and Degenerate if no pair separates its chosen and rejected features.
RewardModel train_reward_model(std::span<const PreferencePair> pairs, const RewardModelHyper& hyper);

/// A conversation prefix ending in a user turn, with the condition that produced it.
struct TrainingContext {
  UserCondition condition;
  std::vector<Turn> turns;
};

/// Root-to-user-node contexts of the live, non-terminal user nodes of a tree.
std::vector<TrainingContext> tree_contexts(const DialogueTree& tree);

struct RankedPairsResult {
  std::vector<PreferencePair> pairs;
  std::size_t skipped_identical = 0;  // no distinct second sample within the retry cap
  std::size_t skipped_ties = 0;       // both replies scored the same

  nlohmann::json report() const;
};

/// For each context draws two distinct replies from the policy (resampling up
/// to `retry_cap` times) and orders them by the scorer.
RankedPairsResult generate_ranked_pairs(const AgentPolicy& policy,
                                        std::span<const TrainingContext> contexts,
                                        const ResponseScorer& scorer, std::uint64_t seed,
                                        int retry_cap = 8);

/// Draws n replies and returns the highest-scoring one (earliest on ties).
Turn best_of_n(const AgentPolicy& policy, const UserCondition& condition,
               std::span<const Turn> context, const ResponseScorer& scorer, int n,
               std::uint64_t seed);

/// Best-of-N sampling wrapped as an agent.
class BestOfNPolicy final : public AgentPolicy {
 public:
  BestOfNPolicy(const AgentPolicy& base, ResponseScorer scorer, int n);

  Role role() const override { return Role::Model; }
  std::string name() const override { return "bon" + std::to_string(n_) + ":" + base_.name(); }
  Turn respond(const UserCondition& condition, std::span<const Turn> context,
               std::uint64_t seed) const override;

 private:
  const AgentPolicy& base_;
  ResponseScorer scorer_;
  int n_;
};

struct MixConfig {
  bool balance = true;
  double dt_ratio = 1.0;  // |D_t| : |D_p| after balancing
  std::uint64_t seed = 0;
};

/// D = D_p followed by D_t, source tags kept. With `balance`, the larger part
/// is shuffled and truncated to the requested ratio (when both are non-empty).
std::vector<PreferencePair> compose_dataset(std::vector<PreferencePair> dp,
                                            std::vector<PreferencePair> dt, const MixConfig& cfg);

}  // namespace engage
