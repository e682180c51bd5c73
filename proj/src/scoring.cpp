#include "engage/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <sstream>

#include "engage/error.hpp"
#include "engage/text.hpp"

namespace engage {

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw EngageError(ErrorKind::InvalidArgument, "embedding dimension 0");
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
  return static_cast<std::size_t>(fnv1a64(token, seed_) % dimension_);
}

std::vector<double> HashingEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  for (const auto& token : tokenize(text)) v[bucket(token)] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw EngageError(ErrorKind::InvalidArgument, "cosine of vectors with different dimensions");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw EngageError(ErrorKind::ZeroVector, "cosine of a zero vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double state_alignment(const StructuredState& sim_state, const StructuredState& predicted_state,
                       const EmbeddingFn& embed) {
  const auto a = embed.embed(sim_state.content_text());
  const auto b = embed.embed(predicted_state.content_text());
  return cosine(a, b);
}

double alignment_criterion(const std::optional<StructuredState>& sim_state,
                           const std::optional<StructuredState>& predicted_state,
                           const EmbeddingFn& embed) {
  constexpr double kWorst = -std::numeric_limits<double>::infinity();
  if (!sim_state || !predicted_state) return kWorst;
  try {
    return state_alignment(*sim_state, *predicted_state, embed);
  } catch (const EngageError& e) {
    if (e.kind() == ErrorKind::ZeroVector) return kWorst;
    throw;
  }
}

// --- Sentiment --------------------------------------------------------------

SentimentLexicon::SentimentLexicon(std::map<std::string, double> valences, double alpha)
    : alpha_(alpha) {
  if (!(alpha > 0.0)) throw EngageError(ErrorKind::InvalidArgument, "lexicon alpha must be > 0");
  for (auto& [term, v] : valences) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw EngageError(ErrorKind::InvalidArgument,
                        "valence of '" + term + "' outside [-1, 1]");
    }
    valences_[to_lower(term)] = v;
  }
}

const SentimentLexicon& SentimentLexicon::builtin() {
  // Valences on VADER's -4..4 scale divided by 4, for words the toy
  // simulators and typical persuasion replies use.
  static const SentimentLexicon lex(std::map<std::string, double>{
      {"amazing", 0.70},      {"annoyed", -0.55},   {"annoying", -0.55}, {"awesome", 0.78},
      {"awful", -0.78},       {"bad", -0.62},       {"beautiful", 0.72}, {"best", 0.80},
      {"boring", -0.32},      {"bother", -0.35},    {"care", 0.55},      {"certainly", 0.30},
      {"cheat", -0.52},       {"definitely", 0.42}, {"doubt", -0.37},    {"enjoy", 0.55},
      {"excellent", 0.80},    {"fake", -0.52},      {"fine", 0.20},      {"fraud", -0.70},
      {"generous", 0.57},     {"glad", 0.50},       {"good", 0.48},      {"great", 0.78},
      {"happy", 0.68},        {"hate", -0.68},      {"help", 0.42},      {"helpful", 0.45},
      {"hope", 0.48},         {"important", 0.20},  {"inspiring", 0.55}, {"interesting", 0.42},
      {"kind", 0.60},         {"like", 0.38},       {"love", 0.80},      {"meaningful", 0.45},
      {"nice", 0.45},         {"no", -0.30},        {"okay", 0.22},      {"pressure", -0.30},
      {"pushy", -0.55},       {"rude", -0.50},      {"sad", -0.53},      {"scam", -0.65},
      {"skeptical", -0.30},   {"sorry", -0.08},     {"suspicious", -0.38}, {"terrible", -0.78},
      {"thank", 0.38},        {"thanks", 0.48},     {"trust", 0.58},     {"uncomfortable", -0.40},
      {"unsure", -0.25},      {"upset", -0.40},     {"useful", 0.45},    {"waste", -0.45},
      {"welcome", 0.50},      {"wonderful", 0.68},  {"worried", -0.30},  {"worry", -0.48},
      {"worth", 0.22},        {"wrong", -0.52},     {"yes", 0.43},
  });
  return lex;
}

SentimentLexicon SentimentLexicon::from_tsv(std::istream& in, double alpha) {
  std::map<std::string, double> valences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw EngageError(ErrorKind::ParseError,
                        "lexicon line " + std::to_string(line_no) + ": expected term<TAB>valence");
    }
    const std::string term = trim(line.substr(0, tab));
    std::istringstream value_stream(line.substr(tab + 1));
    double value = 0.0;
    if (term.empty() || !(value_stream >> value)) {
      throw EngageError(ErrorKind::ParseError,
                        "lexicon line " + std::to_string(line_no) + ": bad entry");
    }
    valences[term] = value;
  }
  return SentimentLexicon(std::move(valences), alpha);
}

std::optional<double> SentimentLexicon::valence(std::string_view term) const {
  const auto it = valences_.find(to_lower(term));
  if (it == valences_.end()) return std::nullopt;
  return it->second;
}

bool is_negator(std::string_view token) {
  static constexpr std::string_view kNegators[] = {
      "not",    "never",  "don't", "doesn't", "didn't", "isn't",  "wasn't", "aren't",
      "won't",  "can't",  "cannot", "couldn't", "wouldn't", "shouldn't", "nor", "neither",
      "hardly", "without", "nothing", "none", "dont", "isnt", "wont", "cant"};
  for (auto n : kNegators) {
    if (token == n) return true;
  }
  return false;
}

double sentiment_score(const SentimentLexicon& lex, std::string_view text) {
  const auto tokens = tokenize(text);
  double sum = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto v = lex.valence(tokens[i]);
    if (!v) continue;
    if (i > 0 && is_negator(tokens[i - 1])) *v = -*v;
    sum += *v;
  }
  if (sum == 0.0) return 0.0;
  return sum / std::sqrt(sum * sum + lex.alpha());
}

SentimentAccumulator::SentimentAccumulator(double gamma) : gamma_(gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw EngageError(ErrorKind::InvalidArgument, "gamma must lie in [0, 1]");
  }
}

double SentimentAccumulator::accumulate(int turn_index, double sentiment) {
  const int expected = last_index_ ? *last_index_ + 2 : 0;
  if (turn_index != expected) {
    throw EngageError(ErrorKind::OrderViolation,
                      "accumulate called for turn " + std::to_string(turn_index) +
                          ", expected turn " + std::to_string(expected));
  }
  value_ = gamma_ * value_ + sentiment;
  last_index_ = turn_index;
  return value_;
}

double SentimentAccumulator::accumulate(int turn_index, std::string_view user_text,
                                        const SentimentLexicon& lex) {
  return accumulate(turn_index, sentiment_score(lex, user_text));
}

double accumulated_sentiment(std::span<const Turn> path, const SentimentLexicon& lex,
                             double gamma) {
  validate_alternation(path);
  SentimentAccumulator acc(gamma);
  for (std::size_t i = 0; i < path.size(); i += 2) {
    acc.accumulate(static_cast<int>(i), path[i].text, lex);
  }
  return acc.value();
}

}  // namespace engage
