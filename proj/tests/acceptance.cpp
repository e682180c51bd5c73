// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "engage/agents.hpp"
#include "engage/config.hpp"
#include "engage/dpo.hpp"
#include "engage/engagement.hpp"
#include "engage/error.hpp"
#include "engage/eval.hpp"
#include "engage/io.hpp"
#include "engage/ixmcts.hpp"
#include "engage/pipeline.hpp"
#include "engage/preference.hpp"
#include "engage/scoring.hpp"
#include "oracles.hpp"

using namespace engage;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("engage_accept_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Outcome tree_values() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto policy = make_support_baseline(0.5);
  std::size_t nodes = 0;
  for (std::uint64_t run = 0; run < 25; ++run) {
    const auto cond = oracle::random_support_condition(run + 100, "acc" + std::to_string(run));
    const ScriptedSeekerSimulator sim({2 + static_cast<int>(run % 4), 0.5, run});
    SearchConfig cfg;
    cfg.seed = run;
    cfg.iterations = 30 + static_cast<int>(run * 5);
    cfg.prune_cap = 3 + static_cast<int>(run % 7);
    const auto tree = search(cond, sim, policy, cfg);
    o.require(tree.size() <= 500, "tree over 500 nodes");
    nodes += tree.size();
    const auto from_log = oracle::values_from_log(tree);
    for (const auto& n : tree.nodes()) {
      const auto [sn, sq] = oracle::subtree_sum(tree, n.id);
      o.require(n.visits == sn && n.visits == from_log[n.id].first,
                "N mismatch at run " + std::to_string(run) + " node " + std::to_string(n.id));
      o.require(n.total_reward == sq, "Q mismatch at run " + std::to_string(run) + " node " + std::to_string(n.id));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail = "25 runs, " + std::to_string(nodes) + " nodes, " + fmt(secs) + " s";
  return o;
}

Outcome ucb_table() {
  Outcome o;
  for (const auto& row : oracle::ucb_table()) {
    const double got = ucb_formula(row.q, row.n, row.n_grandparent, row.c);
    const bool ok = std::isinf(row.expected) ? (std::isinf(got) && got > 0)
                                             : std::abs(got - row.expected) <= 1e-9;
    o.require(ok, "row Q=" + fmt(row.q) + " N=" + fmt(row.n) + " got " + fmt(got, 12));
  }
  if (o.pass) o.detail = std::to_string(oracle::ucb_table().size()) + " rows within 1e-9";
  return o;
}

Outcome pruning() {
  Outcome o;
  std::mt19937_64 gen(2024);
  const UserCondition cond{Scenario::EmotionalSupport, "work", "p"};
  const int fixtures = 150;
  for (int f = 0; f < fixtures; ++f) {
    DialogueTree t(cond, SearchConfig{});
    const NodeId root = t.add_node(NodeKind::User, Turn(Role::User, "u", StructuredState{}), kNoNode);
    // Depth 1 plus, for half the fixtures, a second layer of model nodes at depth 3.
    std::vector<NodeId> layer;
    const int pop1 = 1 + static_cast<int>(gen() % 25);
    for (int i = 0; i < pop1; ++i)
      layer.push_back(t.add_node(NodeKind::Model, Turn(Role::Model, "m" + std::to_string(i)), root));
    int depth = 1;
    if (f % 2 == 1) {
      std::vector<NodeId> deeper;
      for (auto m : layer) {
        if (gen() % 3 == 0) continue;
        const NodeId u = t.add_node(NodeKind::User, Turn(Role::User, "u", StructuredState{}), m);
        const int kids = 1 + static_cast<int>(gen() % 4);
        for (int k = 0; k < kids; ++k)
          deeper.push_back(t.add_node(NodeKind::Model, Turn(Role::Model, "d" + std::to_string(k)), u));
      }
      if (!deeper.empty()) layer = deeper, depth = 3;
    }
    std::map<NodeId, double> score;
    std::vector<double> scores;
    for (auto id : layer) {
      double s = static_cast<double>(gen() % 6) / 5.0;
      if (gen() % 17 == 0) s = NAN;
      score[id] = s;
      scores.push_back(s);
    }
    const int k = 1 + static_cast<int>(gen() % 15);
    const auto want = oracle::brute_top_k(layer, scores, static_cast<std::size_t>(k));
    prune_depth(t, depth, [&](const DialogueTree&, NodeId id) { return score.at(id); }, k);
    const auto live = t.live_model_nodes_at(depth);
    const std::size_t expect_n = std::min<std::size_t>(static_cast<std::size_t>(k), layer.size());
    o.require(live.size() <= static_cast<std::size_t>(k) && live.size() == expect_n,
              "fixture " + std::to_string(f) + ": live count " + std::to_string(live.size()));
    o.require(std::set<NodeId>(live.begin(), live.end()) == want,
              "fixture " + std::to_string(f) + ": kept set differs");
  }
  if (o.pass) o.detail = std::to_string(fixtures) + " fixtures";
  return o;
}

Outcome recurrence() {
  Outcome o;
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  double worst = 0.0;
  for (double gamma : {0.0, 0.5, 0.9, 1.0}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> seq(1 + gen() % 50);
      for (auto& x : seq) x = s(gen);
      SentimentAccumulator acc(gamma);
      for (std::size_t j = 0; j < seq.size(); ++j) {
        const double got = acc.accumulate(static_cast<int>(2 * j), seq[j]);
        worst = std::max(worst, std::abs(got - oracle::closed_form_sentiment(seq, j, gamma)));
      }
    }
  }
  o.require(worst <= 1e-12, "max error " + sci(worst));
  if (o.pass) o.detail = "max error " + sci(worst);
  return o;
}

// Mean sigmoid(beta * Delta) of `pol` against `ref` over a dataset.
double mean_margin(const ToyPolicy& pol, const ToyPolicy& ref, std::span<const PreferencePair> data,
                   double beta) {
  double total = 0.0;
  for (const auto& p : data) total += sigmoid(beta * dpo_margin(pol, ref, p));
  return total / static_cast<double>(data.size());
}

Outcome dpo(const std::vector<fs::path>& runs) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& run : runs) {
    const auto cfg = load_run_config(run / "config.json");
    const auto ref = make_baseline_policy(cfg);
    std::ifstream in(run / artifacts::kDataset);
    const auto data = read_pairs_jsonl(in);
    o.require(!data.empty(), run.string() + ": empty dataset");
    for (const auto& p : data)
      o.require(std::abs(dpo_loss(ref, ref, p, cfg.dpo.beta) - std::log(2.0)) <= 1e-12, "loss at ref != ln 2");
    const auto res = train_dpo(ref, data, cfg.dpo);
    const double before = mean_margin(ref, ref, data, cfg.dpo.beta);
    const double after = mean_margin(res.policy, ref, data, cfg.dpo.beta);
    o.require(after > before, run.filename().string() + ": margin " + fmt(before) + " -> " + fmt(after));
    o.detail += run.filename().string() + " margin " + fmt(before) + "->" + fmt(after) + "; ";
  }

  const auto ref = make_support_baseline(0.5);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 0.3);
  double worst = 0.0;
  const std::size_t v = ref.vocabulary_size();
  for (int draw = 0; draw < 50; ++draw) {
    auto pol = ref;
    for (auto& w : pol.mutable_weights()) w += nd(gen) * 0.2;
    const std::size_t c = gen() % v;
    const std::size_t r = (c + 1 + gen() % (v - 1)) % v;
    PreferencePair p;
    p.context = {Turn(Role::User, "I feel stressed about work and sleep " + std::to_string(draw))};
    p.chosen = ref.vocabulary()[c].text;
    p.rejected = ref.vocabulary()[r].text;
    p.chosen_value = 1;
    const double beta = 0.05 + static_cast<double>(gen() % 20) / 10.0;
    const auto g = dpo_grad(pol, ref, p, beta);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == 0.0 && gen() % 64 != 0) continue;
      auto w = pol.mutable_weights();
      const double fd = oracle::central_difference([&] { return dpo_loss(pol, ref, p, beta); }, w[i]);
      worst = std::max(worst, oracle::rel_err(g[i], fd));
    }
  }
  o.require(worst < 1e-4, "gradient rel error " + sci(worst));
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail += "grad rel err " + sci(worst) + ", " + fmt(secs) + " s";
  return o;
}

Outcome reward_model() {
  Outcome o;
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 200; ++i) {
    PreferencePair p;
    p.context = {Turn(Role::User, "topic" + std::to_string(i % 17) + " feeling" + std::to_string(i % 5))};
    p.chosen = "good reply " + std::to_string(i % 23);
    p.rejected = "poor reply " + std::to_string(i % 19);
    p.chosen_value = 1;
    pairs.push_back(p);
  }
  RewardModelHyper h;
  h.steps = 500;
  const auto rm = train_reward_model(pairs, h);
  const double acc = pair_accuracy(rm, pairs);
  o.require(acc == 1.0, "accuracy " + fmt(acc));

  std::mt19937_64 gen(13);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<Turn> ctx{Turn(Role::User, "random context " + std::to_string(gen() % 1000))};
    const auto a = "reply " + std::to_string(gen() % 100);
    const auto b = "reply " + std::to_string(gen() % 100);
    worst = std::max(worst, std::abs(rm.preference_probability(ctx, a, b) +
                                     rm.preference_probability(ctx, b, a) - 1.0));
  }
  o.require(worst <= 1e-12, "antisymmetry error " + sci(worst));
  if (o.pass) o.detail = "accuracy 1.0 on 200 pairs, antisymmetry error " + sci(worst);
  return o;
}

Outcome engagement_fixture() {
  Outcome o;
  std::ifstream in(ENGAGE_TEST_DATA "/engagement_fixture.jsonl");
  o.require(in.good(), "fixture missing");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto scenario = parse_scenario(j.at("scenario").get<std::string>());
    std::optional<StructuredState> state;
    if (j.contains("state")) state = j.at("state").get<StructuredState>();
    std::string got;
    std::vector<std::string> warnings;
    try {
      const auto out = default_detector().detect(scenario, Turn(Role::User, j.at("text").get<std::string>(), state));
      got = out.summary();
      warnings = out.warnings;
    } catch (const EngageError& e) {
      got = "error:" + std::string(to_string(e.kind()));
    }
    o.require(got == j.at("expect").get<std::string>() &&
                  warnings == j.at("warnings").get<std::vector<std::string>>(),
              j.at("name").get<std::string>() + ": got '" + got + "'");
    ++n;
  }
  o.require(n == 40, "fixture has " + std::to_string(n) + " cases");
  const auto two = default_detector().detect(Scenario::Persuasion, Turn(Role::User, "I think I will donate $2"));
  o.require(two.engaged && two.level == 1.0, "$2 is not level 1");
  const auto half = default_detector().detect(Scenario::Persuasion, Turn(Role::User, "I'll give $0.50"));
  o.require(half.level == 0.25, "$0.50 is not level 0.25");
  if (o.pass) o.detail = std::to_string(n) + " cases";
  return o;
}

Outcome end_to_end(const fs::path& run, double secs) {
  Outcome o;
  const auto base = EvalReport::from_json(read_json_file(run / artifacts::kEvalBaseline));
  const auto bon = EvalReport::from_json(read_json_file(run / artifacts::kEvalBon));
  const auto aligned = EvalReport::from_json(read_json_file(run / artifacts::kEvalAligned));
  o.require(base.valid_episodes >= 1000, "fewer than 1000 valid episodes");
  const double d_al = aligned.engaged_rate - base.engaged_rate;
  const double d_bon = bon.engaged_rate - base.engaged_rate;
  o.require(d_al >= 0.10, "aligned gain " + fmt(d_al));
  o.require(d_bon > 0.0 && d_bon < d_al, "BoN gain " + fmt(d_bon) + " vs aligned " + fmt(d_al));
  o.require(aligned.mean_turns <= 1.10 * base.mean_turns,
            "turns " + fmt(aligned.mean_turns) + " vs " + fmt(base.mean_turns));
  o.require(secs < 300.0, "took " + fmt(secs) + " s");
  o.detail = "engaged baseline " + fmt(base.engaged_rate) + ", bon " + fmt(bon.engaged_rate) + ", aligned " +
             fmt(aligned.engaged_rate) + "; turns " + fmt(base.mean_turns, 2) + " -> " +
             fmt(aligned.mean_turns, 2) + "; " + fmt(secs, 1) + " s";
  return o;
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  Outcome o;
  const auto ma = read_file(a / artifacts::kManifest);
  const auto mb = read_file(b / artifacts::kManifest);
  o.require(ma == mb, "manifests differ");
  const auto j = json::parse(ma);
  o.require(j.at("complete").get<bool>(), "run incomplete");
  std::size_t files = 0;
  for (const auto& s : j.at("stages")) files += s.at("artifacts").size();
  try {
    verify_manifest(j, a);
    verify_manifest(j, b);
  } catch (const EngageError& e) {
    o.require(false, e.what());
  }
  if (o.pass) o.detail = std::to_string(files) + " artifacts, identical hashes";
  return o;
}

// Runs the pipeline for a shipped config into `dir`, keeping a copy of the
// config with its paths made absolute so later checks can reload it.
double run_shipped(const std::string& name, const fs::path& dir) {
  const fs::path src = fs::path(ENGAGE_SOURCE_DIR) / "configs" / name;
  const auto cfg = load_run_config(src);
  fs::create_directories(dir);
  auto j = cfg.to_json();
  j["conditions"] = cfg.resolve(cfg.conditions).string();
  if (j.contains("eval_conditions")) j["eval_conditions"] = cfg.resolve(cfg.eval_conditions).string();
  write_json_file(dir / "config.json", j);
  const auto t0 = std::chrono::steady_clock::now();
  run_pipeline(cfg, dir, true);
  return seconds_since(t0);
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };

  const auto root = scratch_dir("runs");
  double support_secs = 0.0;
  try {
    support_secs = run_shipped("toy_support.json", root / "support_a");
    run_shipped("toy_support.json", root / "support_b");
    run_shipped("toy_persuasion.json", root / "persuasion");
  } catch (const std::exception& e) {
    std::cout << "pipeline setup failed: " << e.what() << std::endl;
  }

  report("tree-value oracle", tree_values);
  report("UCB arithmetic", ucb_table);
  report("pruning contract", pruning);
  report("accumulated sentiment recurrence", recurrence);
  report("DPO correctness", [&] { return dpo({root / "support_a", root / "persuasion"}); });
  report("reward model", reward_model);
  report("engagement detectors", engagement_fixture);
  report("end-to-end toy reproduction", [&] { return end_to_end(root / "support_a", support_secs); });
  report("determinism", [&] { return determinism(root / "support_a", root / "support_b"); });

  fs::remove_all(root.parent_path());
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
