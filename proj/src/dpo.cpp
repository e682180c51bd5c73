#include "engage/dpo.hpp"

#include <cmath>
#include <numeric>

#include "engage/error.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

void DpoConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw EngageError(ErrorKind::ConfigError, "beta must be > 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw EngageError(ErrorKind::ConfigError, "lr must be > 0");
  }
  if (epochs < 0) throw EngageError(ErrorKind::ConfigError, "epochs must be >= 0");
  if (batch_size < 0) throw EngageError(ErrorKind::ConfigError, "batch_size must be >= 0");
}

void to_json(json& j, const DpoConfig& c) {
  j = json{{"beta", c.beta},
           {"lr", c.learning_rate},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed}};
}

void from_json(const json& j, DpoConfig& c) {
  detail::require_object(j, "dpo config", {"beta", "lr", "epochs", "batch_size", "seed"});
  DpoConfig out;
  if (j.contains("beta")) out.beta = j.at("beta").get<double>();
  if (j.contains("lr")) out.learning_rate = j.at("lr").get<double>();
  if (j.contains("epochs")) out.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) out.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
  out.validate();
  c = out;
}

double dpo_margin(const ToyPolicy& policy, const ToyPolicy& reference, const PreferencePair& pair) {
  const auto lp = policy.log_probs(pair.context);
  const auto lr = reference.log_probs(pair.context);
  const std::size_t c = policy.require_index(pair.chosen);
  const std::size_t r = policy.require_index(pair.rejected);
  const std::size_t rc = reference.require_index(pair.chosen);
  const std::size_t rr = reference.require_index(pair.rejected);
  return (lp[c] - lr[rc]) - (lp[r] - lr[rr]);
}

double dpo_loss(const ToyPolicy& policy, const ToyPolicy& reference, const PreferencePair& pair,
                double beta) {
  return softplus(-beta * dpo_margin(policy, reference, pair));
}

namespace {

// Adds scale * d loss / d w into `grad`. The softmax terms of the two
// log-probabilities cancel, leaving only the chosen and rejected rows.
void accumulate_grad(const ToyPolicy& policy, const ToyPolicy& reference,
                     const PreferencePair& pair, double beta, double scale,
                     std::vector<double>& grad, double* loss, double* margin_prob) {
  const double delta = dpo_margin(policy, reference, pair);
  if (loss) *loss += softplus(-beta * delta);
  if (margin_prob) *margin_prob += sigmoid(beta * delta);
  const std::size_t c = policy.require_index(pair.chosen);
  const std::size_t r = policy.require_index(pair.rejected);
  if (c == r) return;
  const double coeff = -beta * sigmoid(-beta * delta) / policy.temperature() * scale;
  for (const auto& [b, v] : policy.features(pair.context)) {
    grad[policy.weight_index(c, b)] += coeff * v;
    grad[policy.weight_index(r, b)] -= coeff * v;
  }
}

}  // namespace

std::vector<double> dpo_grad(const ToyPolicy& policy, const ToyPolicy& reference,
                             const PreferencePair& pair, double beta) {
  std::vector<double> grad(policy.weights().size(), 0.0);
  accumulate_grad(policy, reference, pair, beta, 1.0, grad, nullptr, nullptr);
  return grad;
}

double dpo_dataset_loss(const ToyPolicy& policy, const ToyPolicy& reference,
                        std::span<const PreferencePair> pairs, double beta) {
  if (pairs.empty()) throw EngageError(ErrorKind::EmptyDataset, "empty preference dataset");
  double total = 0.0;
  for (const auto& p : pairs) total += dpo_loss(policy, reference, p, beta);
  return total / static_cast<double>(pairs.size());
}

json TrainReport::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back(
        {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"mean_margin", e.mean_margin}});
  }
  return json{{"kind", "dpo_report"}, {"config", config}, {"pairs", pairs}, {"epochs", std::move(epochs_json)}};
}

namespace {

EpochStats measure(const ToyPolicy& policy, const ToyPolicy& reference,
                   std::span<const PreferencePair> pairs, double beta, int epoch) {
  EpochStats s;
  s.epoch = epoch;
  for (const auto& p : pairs) {
    const double delta = dpo_margin(policy, reference, p);
    s.mean_loss += softplus(-beta * delta);
    s.mean_margin += sigmoid(beta * delta);
  }
  s.mean_loss /= static_cast<double>(pairs.size());
  s.mean_margin /= static_cast<double>(pairs.size());
  return s;
}

}  // namespace

DpoResult train_dpo(const ToyPolicy& initial, std::span<const PreferencePair> dataset,
                    const DpoConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EngageError(ErrorKind::EmptyDataset, "empty preference dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      initial.require_index(dataset[i].chosen);
      initial.require_index(dataset[i].rejected);
    } catch (const EngageError& e) {
      throw EngageError(ErrorKind::UnknownResponse,
                        "pair #" + std::to_string(i) + ": " + e.message());
    }
  }
  if (!(initial.temperature() > 0.0)) {
    throw EngageError(ErrorKind::InvalidArgument, "DPO needs a policy temperature > 0");
  }

  const ToyPolicy& reference = initial;
  ToyPolicy policy = initial;
  TrainReport report;
  report.config = cfg;
  report.pairs = dataset.size();
  report.epochs.push_back(measure(policy, reference, dataset, cfg.beta, 0));

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch =
      cfg.batch_size == 0 ? dataset.size() : static_cast<std::size_t>(cfg.batch_size);
  Rng rng(cfg.seed);
  std::vector<double> grad(policy.weights().size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (batch < dataset.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        accumulate_grad(policy, reference, dataset[order[k]], cfg.beta, scale, grad, nullptr,
                        nullptr);
      }
      auto w = policy.mutable_weights();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * grad[i];
    }
    report.epochs.push_back(measure(policy, reference, dataset, cfg.beta, epoch));
  }
  return {std::move(policy), std::move(report)};
}

}  // namespace engage
