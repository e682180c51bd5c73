#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "engage/agents.hpp"
#include "engage/config.hpp"
#include "engage/error.hpp"
#include "engage/eval.hpp"
#include "engage/io.hpp"
#include "engage/pipeline.hpp"
#include "oracles.hpp"

using namespace engage;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("engage_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Four support conditions, small budgets: the whole pipeline runs in about a second.
json small_config(const fs::path& dir) {
  std::ifstream in(fs::path(ENGAGE_SOURCE_DIR) / "configs" / "conditions_support.jsonl");
  std::ofstream out(dir / "conditions.jsonl");
  std::string line;
  for (int i = 0; i < 4 && std::getline(in, line); ++i) out << line << '\n';
  out.close();
  return json{{"scenario", "emotional_support"},
              {"seed", 7},
              {"conditions", "conditions.jsonl"},
              {"user", {{"kind", "scripted"}, {"patience", 4}, {"generic_success", 0.5}, {"seed", 3}}},
              {"policy", {{"kind", "toy"}, {"prior_strength", 0.5}}},
              {"search", {{"iterations", 40}}},
              {"dpo", {{"beta", 0.5}, {"lr", 5.0}, {"epochs", 40}}},
              {"eval", {{"episodes", 40}, {"bon_n", 3}}},
              {"workers", 2},
              {"out", "run"}};
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  write_json_file(p, j);
  return p;
}

int cli(const std::string& args, std::string* output = nullptr) {
  const std::string log = (fs::temp_directory_path() / ("engage_cli_" + std::to_string(::getpid()) + ".log")).string();
  const std::string cmd = std::string("\"") + ENGAGE_CLI + "\" " + args + " > \"" + log + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const UserCondition kP{Scenario::Persuasion, "agreeableness=3", "p"};

}  // namespace

TEST_CASE("run config parsing") {
  const auto dir = fresh_dir("cfg");
  const auto cfg = parse_run_config(small_config(dir), dir);
  CHECK(cfg.search.iterations == 40);
  CHECK(cfg.eval_turn_cap() == 2 * cfg.search.depth_cap);
  CHECK(cfg.resolve("conditions.jsonl") == dir / "conditions.jsonl");
  CHECK(parse_run_config(cfg.to_json(), dir).to_json() == cfg.to_json());
  CHECK_FALSE(cfg.to_json().contains("out"));

  for (const char* path : {"/bogus", "/search/bogus", "/user/bogus", "/dpo/bogus"}) {
    auto j = small_config(dir);
    j[json::json_pointer(path)] = 1;
    CHECK_THROWS_AS(parse_run_config(j, dir), EngageError);
  }
  auto neg = small_config(dir);
  neg["search"]["expansion_width"] = 0;
  try {
    parse_run_config(neg, dir);
    FAIL("expected ConfigError");
  } catch (const EngageError& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), EngageError);

  auto http = small_config(dir);
  http["policy"] = {{"kind", "http"}, {"base_url", "http://localhost:1/v1"}, {"model", "m"}};
  const auto hc = parse_run_config(http, dir);
  CHECK_THROWS_AS(make_baseline_policy(hc), EngageError);
  CHECK(make_model_policy(hc)->name() == "http:m");
}

TEST_CASE("condition files") {
  const auto dir = fresh_dir("cond");
  small_config(dir);
  CHECK(load_conditions(dir / "conditions.jsonl").size() == 4);
  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << R"({"scenario":"emotional_support","description":"work","id":"a"})" << '\n'
        << R"({"scenario":"emotional_support","description":"work"})" << '\n';
  }
  CHECK_THROWS_WITH_AS(load_conditions(dir / "bad.jsonl"), doctest::Contains("line 2"), EngageError);
  std::ofstream(dir / "empty.jsonl").close();
  CHECK_THROWS_AS(load_conditions(dir / "empty.jsonl"), EngageError);
  CHECK_THROWS_AS(load_conditions(dir / "absent.jsonl"), EngageError);
}

TEST_CASE("io helpers") {
  const auto dir = fresh_dir("io");
  write_file_atomic(dir / "a.txt", "abc");
  CHECK(read_file(dir / "a.txt") == "abc");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_file(dir / "a.txt") == sha256_hex("abc"));
  CHECK_THROWS_AS(read_file(dir / "nope"), EngageError);

  std::vector<int> out(50, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
  CHECK_THROWS_WITH(parallel_for(20, 3,
                                 [](std::size_t i) {
                                   if (i == 7 || i == 13) throw std::runtime_error("fail " + std::to_string(i));
                                 }),
                    "fail 7");
}

TEST_CASE("evaluation extremes") {
  const auto policy = make_persuasion_baseline();
  const std::vector<UserCondition> conds{kP};
  EvalConfig cfg;
  cfg.episodes = 20;
  cfg.turn_cap = 10;
  cfg.seed = 1;

  const oracle::FixedUser donor("Sure, I will donate $2.");
  const auto all = evaluate(donor, policy, conds, cfg);
  CHECK(all.engaged_rate == 1.0);
  CHECK(all.mean_donation == doctest::Approx(2.0));

  const oracle::FixedUser stubborn("hmm, tell me more");
  const auto none = evaluate(stubborn, policy, conds, cfg);
  CHECK(none.engaged_rate == 0.0);
  for (const auto& r : none.records) {
    CHECK(r.turns == cfg.turn_cap);
    CHECK_FALSE(r.terminated);
  }
  CHECK(none.mean_turns_all == doctest::Approx(10.0));
}

TEST_CASE("evaluation reports are recomputable and deterministic") {
  const ScriptedPersuadeeSimulator user;
  const auto policy = make_persuasion_baseline();
  std::vector<UserCondition> conds;
  for (int a = 1; a <= 5; ++a) conds.push_back({Scenario::Persuasion, "agreeableness=" + std::to_string(a), "p" + std::to_string(a)});
  EvalConfig cfg;
  cfg.episodes = 60;
  cfg.seed = 9;
  const auto r1 = evaluate(user, policy, conds, cfg);
  cfg.workers = 3;
  const auto r2 = evaluate(user, policy, conds, cfg);
  CHECK(r1 == r2);
  CHECK(r1.records.size() == 60);
  CHECK(r1.records[7].condition_id == "p3");
  CHECK(r1.records[7].seed == derive_seed(std::uint64_t{9}, std::uint64_t{7}));

  std::size_t engaged = 0;
  double donation = 0.0;
  for (const auto& r : r1.records) engaged += r.engaged, donation += r.donation;
  CHECK(r1.engaged == engaged);
  CHECK(r1.mean_donation == doctest::Approx(donation / 60.0));
  CHECK(EvalReport::from_json(r1.to_json()) == r1);

  auto tampered = r1.to_json();
  tampered["engaged_rate"] = 0.999;
  CHECK_THROWS_AS(EvalReport::from_json(tampered), EngageError);
}

TEST_CASE("pipeline runs end to end, resumes and is deterministic") {
  const auto dir = fresh_dir("pipe");
  const auto cfg = parse_run_config(small_config(dir), dir);
  const auto a = run_pipeline(cfg, dir / "a", false);
  const auto b = run_pipeline(cfg, dir / "b", false);
  CHECK(a == b);
  CHECK(a["complete"] == true);
  REQUIRE(a["stages"].size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a["stages"][i]["name"] == kStageNames[i]);
    CHECK(a["stages"][i]["seed"] == stage_seed(7, kStageNames[i]));
  }
  CHECK_NOTHROW(verify_manifest(a, dir / "a"));
  CHECK(read_file(dir / "a" / artifacts::kManifest) == read_file(dir / "b" / artifacts::kManifest));

  const auto again = stage_explore(cfg, dir / "a", false);
  CHECK(again.summary["written"] == 0);
  CHECK(again.summary["skipped"] == 4);

  write_file_atomic(dir / "a" / artifacts::kDataset, "tampered\n");
  CHECK_THROWS_AS(verify_manifest(a, dir / "a"), EngageError);
}

TEST_CASE("a failing stage keeps earlier artifacts") {
  const auto dir = fresh_dir("sabotage");
  auto j = small_config(dir);
  j["mining"] = {{"min_visits", 1000000}};
  const auto cfg = parse_run_config(j, dir);
  CHECK_THROWS_WITH_AS(run_pipeline(cfg, dir / "run", false), doctest::Contains("EmptyDataset"), EngageError);
  const auto manifest = read_json_file(dir / "run" / artifacts::kManifest);
  CHECK(manifest["complete"] == false);
  REQUIRE(manifest["stages"].size() == 2);
  CHECK_NOTHROW(verify_manifest(manifest, dir / "run"));
  CHECK(fs::exists(dir / "run" / artifacts::kPairsDp));
  CHECK_FALSE(fs::exists(dir / "run" / artifacts::kRewardModel));
}

TEST_CASE("command line interface") {
  const auto dir = fresh_dir("cli");
  auto j = small_config(dir);
  const auto conf = write_config(dir, j).string();
  std::string out;

  CHECK(cli("explore --config " + conf, &out) == 0);
  const auto tree0 = read_file(dir / "run" / "trees" / "es-00.json");
  CHECK(cli("explore --config " + conf, &out) == 0);
  CHECK(out.find("\"written\":0") != std::string::npos);
  CHECK(cli("explore --force --config " + conf + " --out " + (dir / "other").string()) == 0);
  CHECK(read_file(dir / "other" / "trees" / "es-00.json") == tree0);

  CHECK(cli("mine-pairs --config " + conf) == 0);
  CHECK(cli("train-rm --config " + conf) == 0);
  CHECK(cli("gen-dt --config " + conf) == 0);
  CHECK(cli("train-dpo --config " + conf) == 0);
  CHECK(cli("eval --config " + conf + " --policy aligned --episodes 10", &out) == 0);
  CHECK(cli("validate " + (dir / "run" / "pairs_dp.jsonl").string() + " " +
            (dir / "run" / "reward_model.json").string() + " " + (dir / "run" / "policy_aligned.json").string(),
            &out) == 0);

  {
    std::ofstream ctx(dir / "contexts.jsonl");
    ctx << R"({"id":"x","condition":{"scenario":"emotional_support","description":"work stress","id":"x"},)"
        << R"("turns":[{"role":"user","text":"work is crushing me"}]})" << '\n';
  }
  CHECK(cli("bon --config " + conf + " --contexts " + (dir / "contexts.jsonl").string() + " -n 4", &out) == 0);
  CHECK_FALSE(out.empty());

  CHECK(cli("pipeline --config " + conf + " --out " + (dir / "full").string()) == 0);
  CHECK(cli("validate " + (dir / "full" / "manifest.json").string()) == 0);

  // Malformed condition on line 3.
  {
    std::ofstream bad(dir / "bad.jsonl");
    std::ifstream good(dir / "conditions.jsonl");
    std::string line;
    std::getline(good, line);
    bad << line << '\n' << line << '\n' << "{not json\n";
  }
  j["conditions"] = "bad.jsonl";
  const auto bad_conf = write_config(dir, j).string();
  CHECK(cli("explore --config " + bad_conf + " --out " + (dir / "bad").string(), &out) == 2);
  CHECK(out.find("line 3") != std::string::npos);

  CHECK(cli("explore", &out) == 2);
  CHECK(cli("explore --config " + (dir / "nope.json").string()) == 2);
}
