#include "engage/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "engage/error.hpp"
#include "engage/eval.hpp"
#include "engage/io.hpp"
#include "engage/text.hpp"

namespace engage {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
  return derive_seed(root, "stage:" + std::string(stage));
}

fs::path tree_path(const fs::path& out, const UserCondition& condition) {
  return out / artifacts::kTrees / (condition.id + ".json");
}

namespace {

std::string pairs_text(std::span<const PreferencePair> pairs) {
  std::ostringstream ss;
  write_pairs_jsonl(ss, pairs);
  return ss.str();
}

std::vector<PreferencePair> load_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw EngageError(ErrorKind::IoError, "cannot read " + path.string());
  try {
    return read_pairs_jsonl(in);
  } catch (const EngageError& e) {
    throw EngageError(e.kind(), path.string() + ": " + e.message());
  }
}

void check_condition_ids(std::span<const UserCondition> conditions) {
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto& id = conditions[i].id;
    if (id.find('/') != std::string::npos || id == "." || id == "..") {
      throw EngageError(ErrorKind::ConfigError, "condition id '" + id + "' is not a file name");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (conditions[k].id == id) {
        throw EngageError(ErrorKind::ConfigError, "duplicate condition id '" + id + "'");
      }
    }
  }
}

}  // namespace

StageResult stage_explore(const RunConfig& cfg, const fs::path& out, bool force) {
  StageResult r{"explore", stage_seed(cfg.seed, "explore"), {}, json::object()};
  const auto conditions = load_conditions(cfg.resolve(cfg.conditions));
  check_condition_ids(conditions);
  for (const auto& c : conditions) {
    if (c.scenario != cfg.scenario) {
      throw EngageError(ErrorKind::ConfigError, "condition '" + c.id + "' belongs to another scenario");
    }
  }
  const auto user = make_user_simulator(cfg);
  const auto policy = make_model_policy(cfg);
  std::vector<char> written(conditions.size(), 0);
  parallel_for(conditions.size(), cfg.workers, [&](std::size_t i) {
    const auto path = tree_path(out, conditions[i]);
    if (!force && fs::exists(path)) return;
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(r.seed, conditions[i].id);
    DialogueTree tree(conditions[i], sc);
    try {
      initialize_tree(tree, *user, *policy);
      run_search(tree, *user, *policy);
    } catch (...) {
      if (!tree.empty()) {
        fs::path partial = path;
        partial.replace_extension(".partial.json");
        write_json_file(partial, tree.to_json());
      }
      throw;
    }
    write_json_file(path, tree.to_json());
    written[i] = 1;
  });
  std::size_t n_written = 0;
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    n_written += static_cast<std::size_t>(written[i]);
    r.artifacts.push_back(fs::path(artifacts::kTrees) / (conditions[i].id + ".json"));
  }
  r.summary = {{"conditions", conditions.size()},
               {"written", n_written},
               {"skipped", conditions.size() - n_written}};
  return r;
}

std::vector<DialogueTree> load_trees(const RunConfig& cfg, const fs::path& out) {
  const auto conditions = load_conditions(cfg.resolve(cfg.conditions));
  std::vector<std::optional<DialogueTree>> slots(conditions.size());
  parallel_for(conditions.size(), cfg.workers, [&](std::size_t i) {
    const auto path = tree_path(out, conditions[i]);
    if (!fs::exists(path)) {
      throw EngageError(ErrorKind::IoError, "missing tree dump " + path.string() + " (run explore)");
    }
    try {
      slots[i] = DialogueTree::from_json(read_json_file(path));
    } catch (const EngageError& e) {
      if (e.kind() == ErrorKind::IoError) throw;
      throw EngageError(ErrorKind::ParseError, path.string() + ": " + e.message());
    }
  });
  std::vector<DialogueTree> trees;
  for (auto& t : slots) trees.push_back(std::move(*t));
  return trees;
}

StageResult stage_mine(const RunConfig& cfg, const fs::path& out) {
  StageResult r{"mine", stage_seed(cfg.seed, "mine"), {}, json::object()};
  const auto trees = load_trees(cfg, out);
  std::vector<std::vector<PreferencePair>> per_tree(trees.size());
  parallel_for(trees.size(), cfg.workers,
               [&](std::size_t i) { per_tree[i] = mine_pairs(trees[i], cfg.mining); });
  std::vector<PreferencePair> all;
  for (auto& v : per_tree) all.insert(all.end(), v.begin(), v.end());
  const std::size_t raw = all.size();
  all = dedupe_pairs(std::move(all));
  write_file_atomic(out / artifacts::kPairsDp, pairs_text(all));
  r.artifacts.emplace_back(artifacts::kPairsDp);
  r.summary = {{"trees", trees.size()}, {"pairs", all.size()}, {"duplicates", raw - all.size()}};
  return r;
}

StageResult stage_train_rm(const RunConfig& cfg, const fs::path& out) {
  StageResult r{"train-rm", stage_seed(cfg.seed, "train-rm"), {}, json::object()};
  const auto dp = load_pairs(out / artifacts::kPairsDp);
  RewardModelHyper hyper = cfg.reward_model;
  const auto rm = train_reward_model(dp, hyper);
  write_json_file(out / artifacts::kRewardModel, rm.to_json());
  r.artifacts.emplace_back(artifacts::kRewardModel);
  r.summary = {{"pairs", dp.size()},
               {"final_loss", rm.final_loss()},
               {"pair_accuracy", pair_accuracy(rm, dp)}};
  return r;
}

StageResult stage_gen_dt(const RunConfig& cfg, const fs::path& out) {
  StageResult r{"gen-dt", stage_seed(cfg.seed, "gen-dt"), {}, json::object()};
  const auto trees = load_trees(cfg, out);
  const auto rm = RewardModel::from_json(read_json_file(out / artifacts::kRewardModel));
  if (!rm.trained()) throw EngageError(ErrorKind::InvariantViolation, "reward model is untrained");
  std::vector<TrainingContext> contexts;
  for (const auto& t : trees) {
    auto c = tree_contexts(t);
    contexts.insert(contexts.end(), std::make_move_iterator(c.begin()),
                    std::make_move_iterator(c.end()));
  }
  const auto policy = make_model_policy(cfg);
  auto ranked = generate_ranked_pairs(*policy, contexts, rm.scorer(), r.seed, cfg.dt.retry_cap);
  auto dp = load_pairs(out / artifacts::kPairsDp);
  const std::size_t n_dp = dp.size();
  const std::size_t n_dt = ranked.pairs.size();
  const auto dataset = compose_dataset(std::move(dp), ranked.pairs,
                                       {cfg.dt.balance, cfg.dt.ratio, derive_seed(r.seed, "mix")});
  write_file_atomic(out / artifacts::kPairsDt, pairs_text(ranked.pairs));
  write_file_atomic(out / artifacts::kDataset, pairs_text(dataset));
  json report = ranked.report();
  report["kind"] = "gen_dt_report";
  report["contexts"] = contexts.size();
  report["dataset"] = {{"dp_available", n_dp}, {"dt_available", n_dt}, {"total", dataset.size()}};
  write_json_file(out / artifacts::kGenDtReport, report);
  r.artifacts = {artifacts::kPairsDt, artifacts::kDataset, artifacts::kGenDtReport};
  r.summary = report;
  r.summary.erase("kind");
  return r;
}

StageResult stage_train_dpo(const RunConfig& cfg, const fs::path& out) {
  StageResult r{"train-dpo", stage_seed(cfg.seed, "train-dpo"), {}, json::object()};
  const auto dataset = load_pairs(out / artifacts::kDataset);
  const ToyPolicy baseline = make_baseline_policy(cfg);
  DpoConfig dc = cfg.dpo;
  dc.seed = derive_seed(r.seed, dc.seed);
  const auto result = train_dpo(baseline, dataset, dc);
  write_json_file(out / artifacts::kPolicyBaseline, baseline.to_json());
  write_json_file(out / artifacts::kPolicyAligned, result.policy.to_json());
  write_json_file(out / artifacts::kDpoReport, result.report.to_json());
  r.artifacts = {artifacts::kPolicyBaseline, artifacts::kPolicyAligned, artifacts::kDpoReport};
  const auto& first = result.report.epochs.front();
  const auto& last = result.report.epochs.back();
  r.summary = {{"pairs", dataset.size()},
               {"loss", {first.mean_loss, last.mean_loss}},
               {"margin", {first.mean_margin, last.mean_margin}}};
  return r;
}

StageResult stage_eval(const RunConfig& cfg, const fs::path& out) {
  StageResult r{"eval", stage_seed(cfg.seed, "eval"), {}, json::object()};
  const auto conditions = load_conditions(
      cfg.resolve(cfg.eval_conditions.empty() ? cfg.conditions : cfg.eval_conditions));
  const auto user = make_user_simulator(cfg);
  const auto baseline = ToyPolicy::from_json(read_json_file(out / artifacts::kPolicyBaseline));
  const auto aligned = ToyPolicy::from_json(read_json_file(out / artifacts::kPolicyAligned));
  const auto rm = RewardModel::from_json(read_json_file(out / artifacts::kRewardModel));
  const BestOfNPolicy bon(baseline, rm.scorer(), cfg.eval.bon_n);

  EvalConfig ec;
  ec.episodes = cfg.eval.episodes;
  ec.turn_cap = cfg.eval_turn_cap();
  ec.seed = r.seed;
  ec.workers = cfg.workers;

  json summary = json::object();
  auto run = [&](const char* label, const AgentPolicy& policy, const char* file) {
    auto report = evaluate(*user, policy, conditions, ec);
    report.policy = label;
    write_json_file(out / file, report.to_json());
    r.artifacts.emplace_back(file);
    summary[label] = report.to_json(false);
    summary[label].erase("kind");
    summary[label].erase("policy");
  };
  run("baseline", baseline, artifacts::kEvalBaseline);
  run("bon", bon, artifacts::kEvalBon);
  run("aligned", aligned, artifacts::kEvalAligned);
  write_json_file(out / artifacts::kEvalSummary,
                  json{{"kind", "eval_summary"}, {"turn_cap", ec.turn_cap},
                       {"bon_n", cfg.eval.bon_n}, {"policies", summary}});
  r.artifacts.emplace_back(artifacts::kEvalSummary);
  r.summary = summary;
  return r;
}

namespace {

json stage_entry(const StageResult& r, const fs::path& out) {
  json arts = json::array();
  for (const auto& a : r.artifacts) {
    arts.push_back({{"path", a.generic_string()}, {"sha256", sha256_file(out / a)}});
  }
  return json{{"name", r.name}, {"seed", r.seed}, {"artifacts", arts}, {"summary", r.summary}};
}

}  // namespace

json run_pipeline(const RunConfig& cfg, const fs::path& out, bool force) {
  cfg.validate();
  json manifest{{"kind", "manifest"},
                {"config_sha256", sha256_hex(cfg.to_json().dump())},
                {"seed", cfg.seed},
                {"complete", false},
                {"stages", json::array()}};
  auto record = [&](const StageResult& r) {
    manifest["stages"].push_back(stage_entry(r, out));
    write_json_file(out / artifacts::kManifest, manifest);
  };
  record(stage_explore(cfg, out, force));
  record(stage_mine(cfg, out));
  record(stage_train_rm(cfg, out));
  record(stage_gen_dt(cfg, out));
  record(stage_train_dpo(cfg, out));
  record(stage_eval(cfg, out));
  manifest["complete"] = true;
  write_json_file(out / artifacts::kManifest, manifest);
  return manifest;
}

void verify_manifest(const json& manifest, const fs::path& out) {
  if (!manifest.is_object() || manifest.value("kind", "") != "manifest") {
    throw EngageError(ErrorKind::ParseError, "not a manifest");
  }
  for (const auto& stage : manifest.at("stages")) {
    for (const auto& a : stage.at("artifacts")) {
      const fs::path p = out / a.at("path").get<std::string>();
      if (!fs::exists(p)) {
        throw EngageError(ErrorKind::InvariantViolation, "artifact missing: " + p.string());
      }
      if (sha256_file(p) != a.at("sha256").get<std::string>()) {
        throw EngageError(ErrorKind::InvariantViolation, "artifact changed: " + p.string());
      }
    }
  }
}

}  // namespace engage
