#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "engage/preference.hpp"
#include "engage/toy_policy.hpp"

namespace engage {

struct DpoConfig {
  double beta = 0.1;
  double learning_rate = 0.05;
  int epochs = 30;
  int batch_size = 0;  // 0: full batch
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DpoConfig& c);
void from_json(const nlohmann::json& j, DpoConfig& c);

/// Delta = [log pi(c) - log ref(c)] - [log pi(r) - log ref(r)].
double dpo_margin(const ToyPolicy& policy, const ToyPolicy& reference, const PreferencePair& pair);
/// -log sigmoid(beta * Delta).
double dpo_loss(const ToyPolicy& policy, const ToyPolicy& reference, const PreferencePair& pair,
                double beta);
/// Gradient of dpo_loss with respect to the policy weights (dense).
std::vector<double> dpo_grad(const ToyPolicy& policy, const ToyPolicy& reference,
                             const PreferencePair& pair, double beta);
double dpo_dataset_loss(const ToyPolicy& policy, const ToyPolicy& reference,
                        std::span<const PreferencePair> pairs, double beta);

struct EpochStats {
  int epoch = 0;             // 0 is the state before any update
  double mean_loss = 0.0;
  double mean_margin = 0.0;  // mean sigmoid(beta * Delta)
};

struct TrainReport {
  DpoConfig config;
  std::size_t pairs = 0;
  std::vector<EpochStats> epochs;

  nlohmann::json to_json() const;
};

struct DpoResult {
  ToyPolicy policy;
  TrainReport report;
};

/// Gradient descent on the mean DPO loss starting from `initial`, which also
/// serves as the frozen reference. Throws EmptyDataset on no pairs and
/// UnknownResponse (naming the pair) for replies outside the vocabulary.
DpoResult train_dpo(const ToyPolicy& initial, std::span<const PreferencePair> dataset,
                    const DpoConfig& cfg);

}  // namespace engage
