#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "engage/dialogue.hpp"

namespace engage {

/// text -> fixed-dimension vector. Must be deterministic; blank text maps to
/// the zero vector.
class EmbeddingFn {
 public:
  virtual ~EmbeddingFn() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Hashed bag-of-words, L2-normalized. Built from integer hashing only so the
/// same text yields the same vector on every platform.
class HashingEmbedder final : public EmbeddingFn {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0);

  std::size_t dimension() const override { return dimension_; }
  std::vector<double> embed(std::string_view text) const override;
  std::size_t bucket(std::string_view token) const;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// a.b / (|a||b|). Throws ZeroVector if either norm is zero, InvalidArgument
/// on a dimension mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

/// Cosine between the simulator's state at the previous user turn and the
/// model's predicted state, embedded from their phrase content.
double state_alignment(const StructuredState& sim_state, const StructuredState& predicted_state,
                       const EmbeddingFn& embed);

/// state_alignment, but -inf where it would throw ZeroVector. Missing states
/// also score -inf so they are pruned first.
double alignment_criterion(const std::optional<StructuredState>& sim_state,
                           const std::optional<StructuredState>& predicted_state,
                           const EmbeddingFn& embed);

class SentimentLexicon {
 public:
  static constexpr double kDefaultAlpha = 15.0;

  SentimentLexicon() = default;
  SentimentLexicon(std::map<std::string, double> valences, double alpha = kDefaultAlpha);

  /// Built-in English lexicon.
  static const SentimentLexicon& builtin();
  /// `term<TAB>valence` per line; '#' starts a comment.
  static SentimentLexicon from_tsv(std::istream& in, double alpha = kDefaultAlpha);

  std::optional<double> valence(std::string_view term) const;
  double alpha() const { return alpha_; }
  std::size_t size() const { return valences_.size(); }

 private:
  std::map<std::string, double> valences_;
  double alpha_ = kDefaultAlpha;
};

bool is_negator(std::string_view token);

/// Sum of matched valences s (a term directly after a negator has its sign
/// flipped), normalized to s / sqrt(s^2 + alpha).
double sentiment_score(const SentimentLexicon& lex, std::string_view text);

/// Discounted running sentiment over the user turns of one conversation path:
///   ss_i = gamma * ss_{i-2} + sentiment(u_i),  with ss before the first turn = 0.
/// User turns sit at even indices, so calls must go 0, 2, 4, ...
class SentimentAccumulator {
 public:
  explicit SentimentAccumulator(double gamma = 0.9);

  double accumulate(int turn_index, double sentiment);
  double accumulate(int turn_index, std::string_view user_text, const SentimentLexicon& lex);

  double gamma() const { return gamma_; }
  double value() const { return value_; }
  std::optional<int> last_index() const { return last_index_; }

 private:
  double gamma_;
  double value_ = 0.0;
  std::optional<int> last_index_;
};

/// Accumulated sentiment over every user turn of `path` (which must alternate
/// starting with a user turn).
double accumulated_sentiment(std::span<const Turn> path, const SentimentLexicon& lex,
                             double gamma);

}  // namespace engage
