#include "engage/preference.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "engage/error.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

std::string_view to_string(PairSource source) {
  return source == PairSource::TreeMined ? "tree_mined" : "reward_ranked";
}

namespace {

PairSource parse_source(std::string_view text) {
  if (text == "tree_mined") return PairSource::TreeMined;
  if (text == "reward_ranked") return PairSource::RewardRanked;
  throw EngageError(ErrorKind::ParseError, "unknown pair source '" + std::string(text) + "'");
}

}  // namespace

void PreferencePair::validate() const {
  if (context.empty() || context.back().role != Role::User) {
    throw EngageError(ErrorKind::InvariantViolation, "pair context must end with a user turn");
  }
  if (!alternates(context)) {
    throw EngageError(ErrorKind::InvariantViolation, "pair context does not alternate");
  }
  if (chosen == rejected) {
    throw EngageError(ErrorKind::InvariantViolation, "chosen and rejected replies are identical");
  }
  if (!(chosen_value > rejected_value)) {
    throw EngageError(ErrorKind::InvariantViolation, "chosen value must exceed rejected value");
  }
}

json pair_to_json(const PreferencePair& p) {
  return json{{"context", turns_to_json(p.context)},
              {"chosen", p.chosen},
              {"rejected", p.rejected},
              {"chosen_value", p.chosen_value},
              {"rejected_value", p.rejected_value},
              {"source", std::string(to_string(p.source))}};
}

PreferencePair pair_from_json(const json& j) {
  detail::require_object(j, "preference pair",
                         {"context", "chosen", "rejected", "chosen_value", "rejected_value", "source"});
  PreferencePair p;
  p.context = turns_from_json(j.at("context"));
  p.chosen = detail::get_string(j, "chosen");
  p.rejected = detail::get_string(j, "rejected");
  p.chosen_value = detail::get_number(j, "chosen_value");
  p.rejected_value = detail::get_number(j, "rejected_value");
  p.source = parse_source(detail::get_string(j, "source"));
  try {
    p.validate();
  } catch (const EngageError& e) {
    throw EngageError(ErrorKind::ParseError, e.message());
  }
  return p;
}

std::vector<PreferencePair> read_pairs_jsonl(std::istream& in) {
  std::vector<PreferencePair> out;
  detail::for_each_jsonl(in, [&](const json& j) { out.push_back(pair_from_json(j)); });
  return out;
}

void write_pairs_jsonl(std::ostream& out, std::span<const PreferencePair> pairs) {
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
}

void MiningConfig::validate() const {
  if (min_visits < 1) throw EngageError(ErrorKind::ConfigError, "min_visits must be >= 1");
  if (!(value_margin >= 0.0) || !std::isfinite(value_margin)) {
    throw EngageError(ErrorKind::ConfigError, "value_margin must be finite and >= 0");
  }
}

std::vector<PreferencePair> mine_pairs(const DialogueTree& tree, const MiningConfig& cfg) {
  cfg.validate();
  std::vector<PreferencePair> out;
  struct Group {
    std::string text;
    double q = 0.0;
    std::uint64_t n = 0;
    double value() const { return q / static_cast<double>(n); }
  };
  for (const auto& user : tree.nodes()) {
    if (user.kind != NodeKind::User || user.pruned) continue;
    std::vector<NodeId> kids = user.children;
    std::sort(kids.begin(), kids.end());
    std::vector<Group> groups;
    for (NodeId id : kids) {
      const auto& m = tree.node(id);
      if (m.pruned || m.visits < static_cast<std::uint64_t>(cfg.min_visits)) continue;
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const Group& g) { return g.text == m.turn.text; });
      if (it == groups.end()) {
        groups.push_back({m.turn.text, m.total_reward, m.visits});
      } else {
        it->q += m.total_reward;
        it->n += m.visits;
      }
    }
    if (groups.size() < 2) continue;
    const auto context = tree.path_turns(user.id);
    for (const auto& a : groups) {
      for (const auto& b : groups) {
        if (&a == &b) continue;
        const double va = a.value();
        const double vb = b.value();
        if (va > vb && va - vb >= cfg.value_margin) {
          out.push_back({context, a.text, b.text, va, vb, PairSource::TreeMined});
        }
      }
    }
  }
  return out;
}

std::vector<PreferencePair> dedupe_pairs(std::vector<PreferencePair> pairs) {
  std::vector<PreferencePair> out;
  std::set<std::string> seen;
  for (auto& p : pairs) {
    json key{turns_to_json(p.context), p.chosen, p.rejected};
    if (seen.insert(key.dump()).second) out.push_back(std::move(p));
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

void RewardModelHyper::validate() const {
  if (steps < 0) throw EngageError(ErrorKind::ConfigError, "reward model steps must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw EngageError(ErrorKind::ConfigError, "reward model learning_rate must be > 0");
  }
  if (!(l2 >= 0.0) || !std::isfinite(l2)) {
    throw EngageError(ErrorKind::ConfigError, "reward model l2 must be >= 0");
  }
  if (dimension == 0) throw EngageError(ErrorKind::ConfigError, "reward model dimension must be > 0");
}

RewardModel::RewardModel(std::size_t dimension, std::uint64_t hash_seed)
    : dimension_(dimension), hash_seed_(hash_seed), weights_(dimension, 0.0) {
  if (dimension_ == 0) throw EngageError(ErrorKind::InvalidArgument, "zero reward model dimension");
}

SparseFeatures RewardModel::features(std::span<const Turn> context,
                                     std::string_view response) const {
  // Context tokens as the toy policy sees them, each crossed with the reply.
  std::map<std::size_t, double> counts;
  const std::uint64_t reply = fnv1a64(response, hash_seed_);
  auto add = [&](std::string_view token) {
    counts[static_cast<std::size_t>(fnv1a64(token, reply) % dimension_)] += 1.0;
  };
  add("<bias>");
  const std::size_t start = context.size() > 2 ? context.size() - 2 : 0;
  for (std::size_t i = start; i < context.size(); ++i) {
    const std::string tag = context[i].role == Role::User ? "u:" : "m:";
    for (const auto& token : tokenize(context[i].text)) add(tag + token);
  }
  return SparseFeatures(counts.begin(), counts.end());
}

double RewardModel::score(std::span<const Turn> context, std::string_view response) const {
  double s = 0.0;
  for (const auto& [b, v] : features(context, response)) s += v * weights_[b];
  return s;
}

double RewardModel::preference_probability(std::span<const Turn> context, std::string_view a,
                                           std::string_view b) const {
  return sigmoid(score(context, a) - score(context, b));
}

ResponseScorer RewardModel::scorer() const {
  return [this](std::span<const Turn> context, const std::string& response) {
    return score(context, response);
  };
}

json RewardModel::to_json() const {
  json weights = json::object();
  for (std::size_t b = 0; b < weights_.size(); ++b) {
    if (weights_[b] != 0.0) weights[std::to_string(b)] = weights_[b];
  }
  return json{{"kind", "reward_model"},  {"dimension", dimension_},
              {"hash_seed", hash_seed_}, {"trained", trained_},
              {"final_loss", final_loss_}, {"weights", std::move(weights)}};
}

RewardModel RewardModel::from_json(const json& j) {
  detail::require_object(j, "reward model",
                         {"kind", "dimension", "hash_seed", "trained", "final_loss", "weights"});
  if (detail::get_string(j, "kind") != "reward_model") {
    throw EngageError(ErrorKind::ParseError, "not a reward model");
  }
  try {
    RewardModel rm(j.at("dimension").get<std::size_t>(), j.at("hash_seed").get<std::uint64_t>());
    for (const auto& [key, value] : j.at("weights").items()) {
      std::size_t pos = 0;
      const unsigned long b = std::stoul(key, &pos);
      if (pos != key.size() || b >= rm.dimension_) {
        throw EngageError(ErrorKind::ParseError, "bad weight bucket '" + key + "'");
      }
      rm.weights_[b] = value.get<double>();
    }
    rm.trained_ = j.at("trained").get<bool>();
    rm.final_loss_ = j.at("final_loss").get<double>();
    return rm;
  } catch (const EngageError&) {
    throw;
  } catch (const std::exception& e) {
    throw EngageError(ErrorKind::ParseError, std::string("reward model: ") + e.what());
  }
}

namespace {

double dot(const SparseFeatures& x, std::span<const double> w) {
  double s = 0.0;
  for (const auto& [b, v] : x) s += v * w[b];
  return s;
}

struct PairFeatures {
  SparseFeatures chosen;
  SparseFeatures rejected;
};

std::vector<PairFeatures> featurize(const RewardModel& rm, std::span<const PreferencePair> pairs) {
  std::vector<PairFeatures> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({rm.features(p.context, p.chosen), rm.features(p.context, p.rejected)});
  }
  return out;
}

double loss_of(std::span<const PairFeatures> feats, std::span<const double> w, double l2) {
  double total = 0.0;
  for (const auto& f : feats) total += softplus(-(dot(f.chosen, w) - dot(f.rejected, w)));
  double norm = 0.0;
  for (double x : w) norm += x * x;
  return total / static_cast<double>(feats.size()) + 0.5 * l2 * norm;
}

std::vector<double> grad_of(std::span<const PairFeatures> feats, std::span<const double> w,
                            double l2) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) g[i] = l2 * w[i];
  const double inv = 1.0 / static_cast<double>(feats.size());
  for (const auto& f : feats) {
    const double coeff = -sigmoid(-(dot(f.chosen, w) - dot(f.rejected, w))) * inv;
    for (const auto& [b, v] : f.chosen) g[b] += coeff * v;
    for (const auto& [b, v] : f.rejected) g[b] -= coeff * v;
  }
  return g;
}

}  // namespace

double reward_model_loss(const RewardModel& rm, std::span<const PreferencePair> pairs, double l2) {
  if (pairs.empty()) throw EngageError(ErrorKind::EmptyDataset, "no preference pairs");
  const auto feats = featurize(rm, pairs);
  return loss_of(feats, rm.weights(), l2);
}

std::vector<double> reward_model_grad(const RewardModel& rm, std::span<const PreferencePair> pairs,
                                      double l2) {
  if (pairs.empty()) throw EngageError(ErrorKind::EmptyDataset, "no preference pairs");
  const auto feats = featurize(rm, pairs);
  return grad_of(feats, rm.weights(), l2);
}

double pair_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : pairs) {
    if (rm.score(p.context, p.chosen) > rm.score(p.context, p.rejected)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

RewardModel train_reward_model(std::span<const PreferencePair> pairs,
                               const RewardModelHyper& hyper) {
  hyper.validate();
  if (pairs.empty()) throw EngageError(ErrorKind::EmptyDataset, "no preference pairs to train on");
  RewardModel rm(hyper.dimension, hyper.hash_seed);
  const auto feats = featurize(rm, pairs);
  const bool separable = std::any_of(feats.begin(), feats.end(), [](const PairFeatures& f) {
    return f.chosen != f.rejected;
  });
  if (!separable) {
    throw EngageError(ErrorKind::Degenerate,
                      "every pair has identical chosen and rejected features");
  }
  auto w = rm.mutable_weights();
  for (int step = 0; step < hyper.steps; ++step) {
    const auto g = grad_of(feats, w, hyper.l2);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= hyper.learning_rate * g[i];
  }
  rm.mark_trained(loss_of(feats, w, hyper.l2));
  return rm;
}

std::vector<TrainingContext> tree_contexts(const DialogueTree& tree) {
  std::vector<TrainingContext> out;
  for (const auto& node : tree.nodes()) {
    if (node.kind != NodeKind::User || node.pruned || node.terminal) continue;
    const bool has_live = std::any_of(node.children.begin(), node.children.end(),
                                      [&](NodeId c) { return !tree.node(c).pruned; });
    if (!has_live) continue;
    out.push_back({tree.condition(), tree.path_turns(node.id)});
  }
  return out;
}

json RankedPairsResult::report() const {
  return json{{"pairs", pairs.size()},
              {"skipped_identical", skipped_identical},
              {"skipped_ties", skipped_ties}};
}

RankedPairsResult generate_ranked_pairs(const AgentPolicy& policy,
                                        std::span<const TrainingContext> contexts,
                                        const ResponseScorer& scorer, std::uint64_t seed,
                                        int retry_cap) {
  if (retry_cap < 0) throw EngageError(ErrorKind::InvalidArgument, "retry cap must be >= 0");
  RankedPairsResult result;
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    const auto& ctx = contexts[k];
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k));
    const Turn a = policy.respond(ctx.condition, ctx.turns, derive_seed(s, std::uint64_t{0}));
    std::optional<Turn> b;
    for (int attempt = 1; attempt <= retry_cap + 1 && !b; ++attempt) {
      Turn t = policy.respond(ctx.condition, ctx.turns,
                              derive_seed(s, static_cast<std::uint64_t>(attempt)));
      if (t.text != a.text) b = std::move(t);
    }
    if (!b) {
      ++result.skipped_identical;
      continue;
    }
    const double sa = scorer(ctx.turns, a.text);
    const double sb = scorer(ctx.turns, b->text);
    if (sa == sb) {
      ++result.skipped_ties;
      continue;
    }
    PreferencePair p;
    p.context = ctx.turns;
    p.source = PairSource::RewardRanked;
    if (sa > sb) {
      p.chosen = a.text, p.rejected = b->text, p.chosen_value = sa, p.rejected_value = sb;
    } else {
      p.chosen = b->text, p.rejected = a.text, p.chosen_value = sb, p.rejected_value = sa;
    }
    result.pairs.push_back(std::move(p));
  }
  return result;
}

Turn best_of_n(const AgentPolicy& policy, const UserCondition& condition,
               std::span<const Turn> context, const ResponseScorer& scorer, int n,
               std::uint64_t seed) {
  if (n < 1) throw EngageError(ErrorKind::InvalidArgument, "best-of-n needs n >= 1");
  std::optional<Turn> best;
  double best_score = 0.0;
  for (int k = 0; k < n; ++k) {
    Turn t = policy.respond(condition, context, derive_seed(seed, static_cast<std::uint64_t>(k)));
    const double s = scorer(context, t.text);
    if (!best || s > best_score) {
      best = std::move(t);
      best_score = s;
    }
  }
  return *best;
}

BestOfNPolicy::BestOfNPolicy(const AgentPolicy& base, ResponseScorer scorer, int n)
    : base_(base), scorer_(std::move(scorer)), n_(n) {
  if (n_ < 1) throw EngageError(ErrorKind::InvalidArgument, "best-of-n needs n >= 1");
  if (base_.role() != Role::Model) {
    throw EngageError(ErrorKind::InvalidArgument, "best-of-n wraps a model policy");
  }
}

Turn BestOfNPolicy::respond(const UserCondition& condition, std::span<const Turn> context,
                            std::uint64_t seed) const {
  return best_of_n(base_, condition, context, scorer_, n_, seed);
}

namespace {

void shuffle_truncate(std::vector<PreferencePair>& v, std::size_t keep, std::uint64_t seed) {
  if (v.size() <= keep) return;
  Rng rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  v.resize(keep);
}

}  // namespace

std::vector<PreferencePair> compose_dataset(std::vector<PreferencePair> dp,
                                            std::vector<PreferencePair> dt, const MixConfig& cfg) {
  if (!(cfg.dt_ratio > 0.0) || !std::isfinite(cfg.dt_ratio)) {
    throw EngageError(ErrorKind::ConfigError, "dt_ratio must be > 0");
  }
  if (cfg.balance && !dp.empty() && !dt.empty()) {
    const double want_dt = cfg.dt_ratio * static_cast<double>(dp.size());
    if (static_cast<double>(dt.size()) > want_dt) {
      shuffle_truncate(dt, std::max<std::size_t>(1, static_cast<std::size_t>(want_dt)),
                       derive_seed(cfg.seed, "dt"));
    } else {
      const double want_dp = static_cast<double>(dt.size()) / cfg.dt_ratio;
      shuffle_truncate(dp, std::max<std::size_t>(1, static_cast<std::size_t>(want_dp)),
                       derive_seed(cfg.seed, "dp"));
    }
  }
  std::vector<PreferencePair> out = std::move(dp);
  out.insert(out.end(), std::make_move_iterator(dt.begin()), std::make_move_iterator(dt.end()));
  return out;
}

}  // namespace engage
