#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "engage/dialogue.hpp"

namespace engage {

/// Sparse feature vector: (bucket, value) with unique buckets in ascending order.
using SparseFeatures = std::vector<std::pair<std::size_t, double>>;

/// Hashed bag-of-words over the last two turns of a context. Each token is
/// tagged with its speaker ("u:" / "m:") before hashing, and a constant
/// "<bias>" token is always present.
SparseFeatures context_features(std::span<const Turn> context, std::size_t buckets,
                                std::uint64_t hash_seed);

/// Log-linear policy over a fixed response vocabulary:
///   score(C, r) = sum_b x_b(C) * w[r, b],   pi(r | C) = softmax_r(score / temperature).
class ToyPolicy final : public AgentPolicy {
 public:
  struct Response {
    std::string text;
    std::optional<StructuredState> predicted_state;

    bool operator==(const Response&) const = default;
  };

  static constexpr std::size_t kDefaultBuckets = 512;

  ToyPolicy(std::vector<Response> vocabulary, double temperature = 1.0,
            std::size_t buckets = kDefaultBuckets, std::uint64_t hash_seed = 0);

  Role role() const override { return Role::Model; }
  std::string name() const override { return "toy"; }

  /// Samples from pi(. | context); temperature 0 picks the argmax (lowest index on ties).
  Turn respond(const UserCondition& condition, std::span<const Turn> context,
               std::uint64_t seed) const override;

  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  const std::vector<Response>& vocabulary() const { return vocabulary_; }
  std::optional<std::size_t> index_of(std::string_view text) const;
  /// Throws UnknownResponse.
  std::size_t require_index(std::string_view text) const;

  double temperature() const { return temperature_; }
  std::size_t buckets() const { return buckets_; }
  std::uint64_t hash_seed() const { return hash_seed_; }

  std::size_t weight_index(std::size_t response, std::size_t bucket) const {
    return response * buckets_ + bucket;
  }
  std::span<const double> weights() const { return weights_; }
  std::span<double> mutable_weights() { return weights_; }
  void set_weights(std::vector<double> weights);
  /// Adds `delta` to w[response, bucket-of(token)] for a raw tagged token such as "u:work".
  void add_token_weight(std::size_t response, std::string_view tagged_token, double delta);

  SparseFeatures features(std::span<const Turn> context) const;
  std::vector<double> log_probs(std::span<const Turn> context) const;
  double log_prob(std::span<const Turn> context, std::string_view response) const;
  /// d log pi(response | context) / d w, dense over all weights.
  std::vector<double> grad_log_prob(std::span<const Turn> context,
                                    std::string_view response) const;

  /// Draws a vocabulary index from pi(. | context).
  std::size_t sample_index(std::span<const Turn> context, std::uint64_t seed) const;

  nlohmann::json to_json() const;
  static ToyPolicy from_json(const nlohmann::json& j);

 private:
  std::vector<Response> vocabulary_;
  double temperature_;
  std::size_t buckets_;
  std::uint64_t hash_seed_;
  std::vector<double> weights_;
};

double log_sum_exp(std::span<const double> xs);

}  // namespace engage
