#include "engage/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "engage/error.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - m);
  return m + std::log(sum);
}

SparseFeatures context_features(std::span<const Turn> context, std::size_t buckets,
                                std::uint64_t hash_seed) {
  std::map<std::size_t, double> counts;
  auto add = [&](std::string_view token) {
    counts[static_cast<std::size_t>(fnv1a64(token, hash_seed) % buckets)] += 1.0;
  };
  add("<bias>");
  const std::size_t start = context.size() > 2 ? context.size() - 2 : 0;
  for (std::size_t i = start; i < context.size(); ++i) {
    const std::string tag = context[i].role == Role::User ? "u:" : "m:";
    for (const auto& token : tokenize(context[i].text)) add(tag + token);
  }
  return SparseFeatures(counts.begin(), counts.end());
}

ToyPolicy::ToyPolicy(std::vector<Response> vocabulary, double temperature, std::size_t buckets,
                     std::uint64_t hash_seed)
    : vocabulary_(std::move(vocabulary)),
      temperature_(temperature),
      buckets_(buckets),
      hash_seed_(hash_seed),
      weights_(vocabulary_.size() * buckets, 0.0) {
  if (vocabulary_.empty()) throw EngageError(ErrorKind::InvalidArgument, "empty vocabulary");
  if (buckets_ == 0) throw EngageError(ErrorKind::InvalidArgument, "zero feature buckets");
  if (!(temperature_ >= 0.0) || !std::isfinite(temperature_)) {
    throw EngageError(ErrorKind::InvalidArgument, "temperature must be finite and >= 0");
  }
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (trim(vocabulary_[i].text).empty()) {
      throw EngageError(ErrorKind::InvalidArgument, "empty response in vocabulary");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (vocabulary_[k].text == vocabulary_[i].text) {
        throw EngageError(ErrorKind::InvalidArgument,
                          "duplicate response '" + vocabulary_[i].text + "'");
      }
    }
  }
}

std::optional<std::size_t> ToyPolicy::index_of(std::string_view text) const {
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (vocabulary_[i].text == text) return i;
  }
  return std::nullopt;
}

std::size_t ToyPolicy::require_index(std::string_view text) const {
  auto idx = index_of(text);
  if (!idx) {
    throw EngageError(ErrorKind::UnknownResponse,
                      "response not in vocabulary: '" + std::string(text) + "'");
  }
  return *idx;
}

void ToyPolicy::set_weights(std::vector<double> weights) {
  if (weights.size() != weights_.size()) {
    throw EngageError(ErrorKind::InvalidArgument, "weight vector has the wrong size");
  }
  weights_ = std::move(weights);
}

void ToyPolicy::add_token_weight(std::size_t response, std::string_view tagged_token,
                                 double delta) {
  const auto bucket = static_cast<std::size_t>(fnv1a64(tagged_token, hash_seed_) % buckets_);
  weights_.at(weight_index(response, bucket)) += delta;
}

SparseFeatures ToyPolicy::features(std::span<const Turn> context) const {
  return context_features(context, buckets_, hash_seed_);
}

namespace {

std::vector<double> raw_scores(const ToyPolicy& p, const SparseFeatures& x) {
  std::vector<double> scores(p.vocabulary_size(), 0.0);
  const auto w = p.weights();
  for (std::size_t r = 0; r < scores.size(); ++r) {
    double s = 0.0;
    for (const auto& [b, v] : x) s += v * w[p.weight_index(r, b)];
    scores[r] = s;
  }
  return scores;
}

}  // namespace

std::vector<double> ToyPolicy::log_probs(std::span<const Turn> context) const {
  if (!(temperature_ > 0.0)) {
    throw EngageError(ErrorKind::InvalidArgument, "log-probabilities need temperature > 0");
  }
  auto logits = raw_scores(*this, features(context));
  for (double& l : logits) l /= temperature_;
  const double z = log_sum_exp(logits);
  for (double& l : logits) l -= z;
  return logits;
}

double ToyPolicy::log_prob(std::span<const Turn> context, std::string_view response) const {
  const auto r = require_index(response);
  return log_probs(context)[r];
}

std::vector<double> ToyPolicy::grad_log_prob(std::span<const Turn> context,
                                             std::string_view response) const {
  const auto r = require_index(response);
  const auto x = features(context);
  const auto lp = log_probs(context);
  std::vector<double> grad(weights_.size(), 0.0);
  for (std::size_t k = 0; k < vocabulary_.size(); ++k) {
    const double coeff = ((k == r) ? 1.0 : 0.0) - std::exp(lp[k]);
    for (const auto& [b, v] : x) grad[weight_index(k, b)] = coeff * v / temperature_;
  }
  return grad;
}

std::size_t ToyPolicy::sample_index(std::span<const Turn> context, std::uint64_t seed) const {
  if (temperature_ == 0.0) {
    const auto scores = raw_scores(*this, features(context));
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) -
                                    scores.begin());
  }
  const auto lp = log_probs(context);
  Rng rng(seed);
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t k = 0; k < lp.size(); ++k) {
    cumulative += std::exp(lp[k]);
    if (u < cumulative) return k;
  }
  return lp.size() - 1;
}

Turn ToyPolicy::respond(const UserCondition&, std::span<const Turn> context,
                        std::uint64_t seed) const {
  validate_context_for(Role::Model, context);
  const auto& chosen = vocabulary_[sample_index(context, seed)];
  return Turn(Role::Model, chosen.text, chosen.predicted_state);
}

json ToyPolicy::to_json() const {
  json vocab = json::array();
  for (const auto& r : vocabulary_) {
    json item{{"text", r.text}};
    if (r.predicted_state) item["state"] = *r.predicted_state;
    vocab.push_back(std::move(item));
  }
  return json{{"kind", "toy_policy"},
              {"vocabulary", std::move(vocab)},
              {"temperature", temperature_},
              {"buckets", buckets_},
              {"hash_seed", hash_seed_},
              {"weights", weights_}};
}

ToyPolicy ToyPolicy::from_json(const json& j) {
  detail::require_object(j, "toy policy",
                         {"kind", "vocabulary", "temperature", "buckets", "hash_seed", "weights"});
  if (j.value("kind", "") != "toy_policy") {
    throw EngageError(ErrorKind::ParseError, "not a toy policy document");
  }
  std::vector<Response> vocab;
  for (const auto& item : j.at("vocabulary")) {
    detail::require_object(item, "vocabulary entry", {"text", "state"});
    Response r{detail::get_string(item, "text"), std::nullopt};
    if (item.contains("state")) r.predicted_state = item.at("state").get<StructuredState>();
    vocab.push_back(std::move(r));
  }
  ToyPolicy policy(std::move(vocab), j.at("temperature").get<double>(),
                   j.at("buckets").get<std::size_t>(), j.at("hash_seed").get<std::uint64_t>());
  auto weights = j.at("weights").get<std::vector<double>>();
  for (double w : weights) {
    if (!std::isfinite(w)) throw EngageError(ErrorKind::ParseError, "non-finite policy weight");
  }
  policy.set_weights(std::move(weights));
  return policy;
}

}  // namespace engage
