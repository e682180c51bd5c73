#include "engage/eval.hpp"

#include <cmath>

#include "engage/error.hpp"
#include "engage/io.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

void EvalConfig::validate() const {
  if (episodes < 1) throw EngageError(ErrorKind::ConfigError, "episodes must be >= 1");
  if (turn_cap < 1) throw EngageError(ErrorKind::ConfigError, "turn_cap must be >= 1");
  if (workers < 1) throw EngageError(ErrorKind::ConfigError, "workers must be >= 1");
}

EvalReport EvalReport::from_records(std::string policy, std::vector<EpisodeRecord> records) {
  EvalReport r;
  r.policy = std::move(policy);
  r.episodes = records.size();
  double donation = 0.0, level = 0.0, turns_engaged = 0.0, turns_all = 0.0;
  for (const auto& e : records) {
    if (e.valid) {
      ++r.valid_episodes;
      turns_all += e.turns;
    }
    if (e.engaged) {
      ++r.engaged;
      turns_engaged += e.turns;
    }
    donation += e.donation;
    level += e.level;
  }
  if (r.episodes > 0) {
    const double n = static_cast<double>(r.episodes);
    r.engaged_rate = static_cast<double>(r.engaged) / n;
    r.mean_donation = donation / n;
    r.mean_level = level / n;
  }
  if (r.engaged > 0) r.mean_turns = turns_engaged / static_cast<double>(r.engaged);
  if (r.valid_episodes > 0) r.mean_turns_all = turns_all / static_cast<double>(r.valid_episodes);
  r.records = std::move(records);
  return r;
}

json EvalReport::to_json(bool with_records) const {
  json j{{"kind", "eval_report"},
         {"policy", policy},
         {"episodes", episodes},
         {"valid_episodes", valid_episodes},
         {"engaged", engaged},
         {"engaged_rate", engaged_rate},
         {"mean_donation", mean_donation},
         {"mean_level", mean_level},
         {"mean_turns", mean_turns},
         {"mean_turns_all", mean_turns_all}};
  if (with_records) {
    json recs = json::array();
    for (const auto& e : records) {
      json rec{{"index", e.index},           {"condition", e.condition_id},
               {"seed", e.seed},             {"turns", e.turns},
               {"terminated", e.terminated}, {"engaged", e.engaged},
               {"level", e.level},           {"donation", e.donation},
               {"valid", e.valid}};
      if (!e.error.empty()) rec["error"] = e.error;
      recs.push_back(std::move(rec));
    }
    j["records"] = std::move(recs);
  }
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  detail::require_object(j, "eval report",
                         {"kind", "policy", "episodes", "valid_episodes", "engaged", "engaged_rate",
                          "mean_donation", "mean_level", "mean_turns", "mean_turns_all",
                          "records"});
  if (detail::get_string(j, "kind") != "eval_report") {
    throw EngageError(ErrorKind::ParseError, "not an eval report");
  }
  if (!j.contains("records")) {
    throw EngageError(ErrorKind::ParseError, "eval report has no per-episode records");
  }
  std::vector<EpisodeRecord> records;
  try {
    for (const auto& rec : j.at("records")) {
      detail::require_object(rec, "episode record",
                             {"index", "condition", "seed", "turns", "terminated", "engaged",
                              "level", "donation", "valid", "error"});
      EpisodeRecord e;
      e.index = rec.at("index").get<std::size_t>();
      e.condition_id = rec.at("condition").get<std::string>();
      e.seed = rec.at("seed").get<std::uint64_t>();
      e.turns = rec.at("turns").get<int>();
      e.terminated = rec.at("terminated").get<bool>();
      e.engaged = rec.at("engaged").get<bool>();
      e.level = rec.at("level").get<double>();
      e.donation = rec.at("donation").get<double>();
      e.valid = rec.at("valid").get<bool>();
      if (rec.contains("error")) e.error = rec.at("error").get<std::string>();
      records.push_back(std::move(e));
    }
  } catch (const EngageError&) {
    throw;
  } catch (const std::exception& e) {
    throw EngageError(ErrorKind::ParseError, std::string("episode record: ") + e.what());
  }
  EvalReport r = from_records(detail::get_string(j, "policy"), std::move(records));
  const json again = r.to_json(false);
  for (const char* key : {"episodes", "valid_episodes", "engaged", "engaged_rate", "mean_donation",
                          "mean_level", "mean_turns", "mean_turns_all"}) {
    if (again.at(key) != j.at(key)) {
      throw EngageError(ErrorKind::ParseError,
                        std::string("eval report field '") + key + "' disagrees with its records");
    }
  }
  return r;
}

EpisodeResult run_episode(const AgentPolicy& user_sim, const AgentPolicy& policy,
                          const UserCondition& condition, std::uint64_t seed, int turn_cap,
                          const EngagementDetector& detector) {
  if (user_sim.role() != Role::User || policy.role() != Role::Model) {
    throw EngageError(ErrorKind::RoleViolation, "episode needs a user simulator and a model policy");
  }
  std::vector<Turn> turns;
  EngagementOutcome outcome;
  for (int t = 0; t < turn_cap; ++t) {
    const AgentPolicy& agent = t % 2 == 0 ? user_sim : policy;
    Turn next = agent.respond(condition, turns, derive_seed(seed, static_cast<std::uint64_t>(t)));
    if (next.role != agent.role()) {
      throw EngageError(ErrorKind::RoleViolation, agent.name() + " produced a turn of the wrong role");
    }
    turns.push_back(std::move(next));
    if (t % 2 == 0) {
      outcome = detector.detect(condition.scenario, turns.back());
      if (outcome.terminated) break;
    }
  }
  if (!outcome.terminated) outcome = EngagementOutcome{};
  return {Conversation("episode", condition, std::move(turns)), std::move(outcome)};
}

EvalReport evaluate(const AgentPolicy& user_sim, const AgentPolicy& policy,
                    std::span<const UserCondition> conditions, const EvalConfig& cfg,
                    const EngagementDetector& detector) {
  cfg.validate();
  if (conditions.empty()) throw EngageError(ErrorKind::ConfigError, "no evaluation conditions");
  std::vector<EpisodeRecord> records(static_cast<std::size_t>(cfg.episodes));
  parallel_for(records.size(), cfg.workers, [&](std::size_t k) {
    const auto& condition = conditions[k % conditions.size()];
    EpisodeRecord& rec = records[k];
    rec.index = k;
    rec.condition_id = condition.id;
    rec.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
    try {
      const auto result = run_episode(user_sim, policy, condition, rec.seed, cfg.turn_cap, detector);
      rec.turns = static_cast<int>(result.conversation.size());
      rec.terminated = result.outcome.terminated;
      rec.engaged = result.outcome.engaged;
      rec.level = result.outcome.level;
      if (condition.scenario == Scenario::Persuasion) rec.donation = kMaxDonation * rec.level;
    } catch (const std::exception& e) {
      rec = EpisodeRecord{k, condition.id, rec.seed, 0, false, false, 0.0, 0.0, false, e.what()};
    }
  });
  return EvalReport::from_records(policy.name(), std::move(records));
}

}  // namespace engage
