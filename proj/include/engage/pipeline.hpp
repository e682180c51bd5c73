#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "engage/config.hpp"

namespace engage {

/// Stage seed: derive_seed(root, "stage:" + name).
std::uint64_t stage_seed(std::uint64_t root, std::string_view stage);

inline constexpr const char* kStageNames[] = {"explore",   "mine",      "train-rm",
                                              "gen-dt",    "train-dpo", "eval"};

/// Output file layout of a run directory.
namespace artifacts {
inline constexpr const char* kTrees = "trees";
inline constexpr const char* kPairsDp = "pairs_dp.jsonl";
inline constexpr const char* kRewardModel = "reward_model.json";
inline constexpr const char* kPairsDt = "pairs_dt.jsonl";
inline constexpr const char* kGenDtReport = "gen_dt_report.json";
inline constexpr const char* kDataset = "dataset.jsonl";
inline constexpr const char* kPolicyBaseline = "policy_baseline.json";
inline constexpr const char* kPolicyAligned = "policy_aligned.json";
inline constexpr const char* kDpoReport = "dpo_report.json";
inline constexpr const char* kEvalBaseline = "eval_baseline.json";
inline constexpr const char* kEvalBon = "eval_bon.json";
inline constexpr const char* kEvalAligned = "eval_aligned.json";
inline constexpr const char* kEvalSummary = "eval_summary.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifacts

struct StageResult {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> artifacts;  // relative to the run directory
  nlohmann::json summary = nlohmann::json::object();
};

std::filesystem::path tree_path(const std::filesystem::path& out, const UserCondition& condition);

/// One tree per condition. Existing dumps are kept unless `force`; summary
/// reports how many were written and skipped.
StageResult stage_explore(const RunConfig& cfg, const std::filesystem::path& out, bool force);
StageResult stage_mine(const RunConfig& cfg, const std::filesystem::path& out);
StageResult stage_train_rm(const RunConfig& cfg, const std::filesystem::path& out);
StageResult stage_gen_dt(const RunConfig& cfg, const std::filesystem::path& out);
StageResult stage_train_dpo(const RunConfig& cfg, const std::filesystem::path& out);
/// Evaluates the baseline, Best-of-N over the baseline with the trained
/// reward model, and the aligned policy on identical episode seeds.
StageResult stage_eval(const RunConfig& cfg, const std::filesystem::path& out);

/// Runs all stages in order and writes the manifest after each one, so a
/// failure leaves earlier artifacts and their hashes in place.
nlohmann::json run_pipeline(const RunConfig& cfg, const std::filesystem::path& out, bool force);

/// Throws InvariantViolation if any listed artifact is missing or its hash changed.
void verify_manifest(const nlohmann::json& manifest, const std::filesystem::path& out);

std::vector<DialogueTree> load_trees(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace engage
