#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "engage/config.hpp"
#include "engage/error.hpp"
#include "engage/eval.hpp"
#include "engage/io.hpp"
#include "engage/pipeline.hpp"
#include "engage/text.hpp"

namespace fs = std::filesystem;
using namespace engage;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (JSON)")->required();
  cmd->add_option("--seed", c.seed, "override the root seed");
  cmd->add_flag("--force", c.force, "redo work whose output already exists");
  cmd->add_option("--out", c.out, "run directory (default: the config's \"out\")");
}

struct Loaded {
  RunConfig cfg;
  fs::path out;
};

Loaded load(const Common& c) {
  Loaded l{load_run_config(c.config), {}};
  if (c.seed) l.cfg.seed = *c.seed;
  l.out = c.out.empty() ? l.cfg.resolve(l.cfg.out) : fs::path(c.out);
  return l;
}

void print_stage(const StageResult& r) {
  std::cout << r.name << ": " << r.summary.dump() << "\n";
}

void validate_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw EngageError(ErrorKind::IoError, "cannot read " + path.string());
  std::string first;
  while (std::getline(in, first) && first.find_first_not_of(" \t\r") == std::string::npos) {
  }
  in.clear();
  in.seekg(0);
  json probe;
  try {
    probe = json::parse(first);
  } catch (const json::exception&) {
    probe = json::object();
  }
  if (probe.contains("chosen")) {
    read_pairs_jsonl(in);
  } else if (probe.contains("turns")) {
    read_conversations_jsonl(in);
  } else {
    read_conditions_jsonl(in);
  }
}

void validate_json(const fs::path& path) {
  const json j = read_json_file(path);
  const std::string kind = j.is_object() ? j.value("kind", "") : "";
  if (kind == "dialogue_tree") {
    DialogueTree::from_json(j);
  } else if (kind == "toy_policy") {
    ToyPolicy::from_json(j);
  } else if (kind == "reward_model") {
    RewardModel::from_json(j);
  } else if (kind == "eval_report") {
    EvalReport::from_json(j);
  } else if (kind == "manifest") {
    verify_manifest(j, path.parent_path());
  } else if (kind.empty()) {
    parse_run_config(j, path.parent_path());
  } else if (kind != "dpo_report" && kind != "gen_dt_report" && kind != "eval_summary") {
    throw EngageError(ErrorKind::ParseError, "unknown artifact kind '" + kind + "'");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Engagement-driven dialogue search and preference alignment"};
  app.require_subcommand(1);

  Common explore_o, mine_o, rm_o, dt_o, dpo_o, bon_o, eval_o, pipe_o;
  auto* explore = app.add_subcommand("explore", "build one search tree per user condition");
  add_common(explore, explore_o);
  auto* mine = app.add_subcommand("mine-pairs", "mine chosen/rejected pairs from the trees");
  add_common(mine, mine_o);
  auto* train_rm = app.add_subcommand("train-rm", "train the pairwise reward model");
  add_common(train_rm, rm_o);
  auto* gen_dt = app.add_subcommand("gen-dt", "generate reward-ranked pairs and the dataset");
  add_common(gen_dt, dt_o);
  auto* train_dpo_cmd = app.add_subcommand("train-dpo", "align the toy policy with DPO");
  add_common(train_dpo_cmd, dpo_o);

  auto* bon = app.add_subcommand("bon", "best-of-N replies for conversation contexts");
  add_common(bon, bon_o);
  std::string bon_contexts;
  std::optional<int> bon_n;
  bon->add_option("--contexts", bon_contexts, "conversations JSONL, each ending with a user turn")
      ->required();
  bon->add_option("-n", bon_n, "samples per context (default: eval.bon_n)");

  auto* eval = app.add_subcommand("eval", "interactive evaluation against the user simulator");
  add_common(eval, eval_o);
  std::string eval_policy = "aligned";
  std::optional<int> eval_episodes;
  bool eval_bon = false;
  eval->add_option("--policy", eval_policy, "baseline, aligned, or a toy policy JSON path");
  eval->add_option("--episodes", eval_episodes, "number of episodes");
  eval->add_flag("--bon", eval_bon, "wrap the policy in best-of-N with the trained reward model");

  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write a manifest");
  add_common(pipeline, pipe_o);

  auto* validate = app.add_subcommand("validate", "check artifacts against their schemas");
  std::vector<std::string> validate_paths;
  validate->add_option("paths", validate_paths, "files to check")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (explore->parsed()) {
    const auto l = load(explore_o);
    print_stage(stage_explore(l.cfg, l.out, explore_o.force));
  } else if (mine->parsed()) {
    const auto l = load(mine_o);
    print_stage(stage_mine(l.cfg, l.out));
  } else if (train_rm->parsed()) {
    const auto l = load(rm_o);
    print_stage(stage_train_rm(l.cfg, l.out));
  } else if (gen_dt->parsed()) {
    const auto l = load(dt_o);
    print_stage(stage_gen_dt(l.cfg, l.out));
  } else if (train_dpo_cmd->parsed()) {
    const auto l = load(dpo_o);
    print_stage(stage_train_dpo(l.cfg, l.out));
  } else if (bon->parsed()) {
    const auto l = load(bon_o);
    const auto policy = make_model_policy(l.cfg);
    const auto rm = RewardModel::from_json(read_json_file(l.out / artifacts::kRewardModel));
    std::ifstream in(bon_contexts);
    if (!in) throw EngageError(ErrorKind::IoError, "cannot read " + bon_contexts);
    const auto convs = read_conversations_jsonl(in);
    const std::uint64_t seed = stage_seed(l.cfg.seed, "bon");
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const auto context = context_for_model(convs[i]);
      validate_context_for(Role::Model, context);
      const Turn t = best_of_n(*policy, convs[i].condition(), context, rm.scorer(),
                               bon_n.value_or(l.cfg.eval.bon_n), derive_seed(seed, static_cast<std::uint64_t>(i)));
      std::cout << json{{"id", convs[i].id()}, {"response", t.text}}.dump() << "\n";
    }
  } else if (eval->parsed()) {
    auto l = load(eval_o);
    if (eval_episodes) l.cfg.eval.episodes = *eval_episodes;
    l.cfg.validate();
    std::unique_ptr<AgentPolicy> policy;
    if (eval_policy == "baseline") {
      policy = make_model_policy(l.cfg);
    } else {
      const fs::path p =
          eval_policy == "aligned" ? l.out / artifacts::kPolicyAligned : fs::path(eval_policy);
      policy = std::make_unique<ToyPolicy>(ToyPolicy::from_json(read_json_file(p)));
    }
    std::optional<RewardModel> rm;
    std::unique_ptr<AgentPolicy> wrapped;
    if (eval_bon) {
      rm = RewardModel::from_json(read_json_file(l.out / artifacts::kRewardModel));
      wrapped = std::make_unique<BestOfNPolicy>(*policy, rm->scorer(), l.cfg.eval.bon_n);
    }
    const AgentPolicy& agent = wrapped ? *wrapped : *policy;
    const auto user = make_user_simulator(l.cfg);
    const auto conditions = load_conditions(
        l.cfg.resolve(l.cfg.eval_conditions.empty() ? l.cfg.conditions : l.cfg.eval_conditions));
    EvalConfig ec;
    ec.episodes = l.cfg.eval.episodes;
    ec.turn_cap = l.cfg.eval_turn_cap();
    ec.seed = stage_seed(l.cfg.seed, "eval");
    ec.workers = l.cfg.workers;
    auto report = evaluate(*user, agent, conditions, ec);
    report.policy = (eval_bon ? "bon:" : "") + eval_policy;
    std::string label = eval_policy == "baseline" || eval_policy == "aligned"
                            ? eval_policy
                            : fs::path(eval_policy).stem().string();
    if (eval_bon) label = "bon_" + label;
    write_json_file(l.out / ("eval_" + label + ".json"), report.to_json());
    std::cout << report.to_json(false).dump() << "\n";
  } else if (pipeline->parsed()) {
    const auto l = load(pipe_o);
    const auto manifest = run_pipeline(l.cfg, l.out, pipe_o.force);
    for (const auto& s : manifest.at("stages")) {
      std::cout << s.at("name").get<std::string>() << ": " << s.at("summary").dump() << "\n";
    }
  } else if (validate->parsed()) {
    for (const auto& p : validate_paths) {
      const fs::path path(p);
      if (path.extension() == ".jsonl") {
        validate_jsonl(path);
      } else {
        validate_json(path);
      }
      std::cout << p << ": ok\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const EngageError& e) {
    std::cerr << "engage: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "engage: internal error: " << e.what() << "\n";
    return 4;
  }
}
