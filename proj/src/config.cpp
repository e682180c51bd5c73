#include "engage/config.hpp"

#include <cmath>
#include <fstream>

#include "engage/error.hpp"
#include "engage/io.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw EngageError(ErrorKind::ConfigError, std::string("'") + key + "': " + e.what());
  }
}

HttpPolicyConfig parse_http(const json& j, Role role, Scenario scenario) {
  detail::require_object(j, "http agent",
                         {"kind", "base_url", "model", "temperature", "system_prompt", "timeout_ms",
                          "max_retries", "backoff_initial_ms", "backoff_max_ms"});
  HttpPolicyConfig h;
  h.role = role;
  h.scenario = scenario;
  read_opt(j, "base_url", h.base_url);
  read_opt(j, "model", h.model);
  read_opt(j, "temperature", h.temperature);
  read_opt(j, "system_prompt", h.system_prompt);
  read_opt(j, "max_retries", h.max_retries);
  long long ms = h.timeout.count();
  read_opt(j, "timeout_ms", ms);
  h.timeout = std::chrono::milliseconds(ms);
  ms = h.backoff_initial.count();
  read_opt(j, "backoff_initial_ms", ms);
  h.backoff_initial = std::chrono::milliseconds(ms);
  ms = h.backoff_max.count();
  read_opt(j, "backoff_max_ms", ms);
  h.backoff_max = std::chrono::milliseconds(ms);
  h.apply_environment();
  return h;
}

json http_to_json(const HttpPolicyConfig& h) {
  return json{{"kind", "http"},
              {"base_url", h.base_url},
              {"model", h.model},
              {"temperature", h.temperature},
              {"system_prompt", h.system_prompt},
              {"timeout_ms", h.timeout.count()},
              {"max_retries", h.max_retries},
              {"backoff_initial_ms", h.backoff_initial.count()},
              {"backoff_max_ms", h.backoff_max.count()}};
}

}  // namespace

void RunConfig::validate() const {
  if (conditions.empty()) throw EngageError(ErrorKind::ConfigError, "'conditions' path is required");
  if (user.kind != "scripted" && user.kind != "http") {
    throw EngageError(ErrorKind::ConfigError, "user.kind must be 'scripted' or 'http'");
  }
  if (policy.kind != "toy" && policy.kind != "http") {
    throw EngageError(ErrorKind::ConfigError, "policy.kind must be 'toy' or 'http'");
  }
  if (user.kind == "http") user.http.validate();
  if (policy.kind == "http") policy.http.validate();
  if (!(policy.temperature >= 0.0) || !std::isfinite(policy.temperature) ||
      !std::isfinite(policy.prior_strength)) {
    throw EngageError(ErrorKind::ConfigError, "policy temperature and prior must be finite");
  }
  search.validate();
  mining.validate();
  reward_model.validate();
  dpo.validate();
  if (dt.retry_cap < 0) throw EngageError(ErrorKind::ConfigError, "dt.retry_cap must be >= 0");
  if (!(dt.ratio > 0.0) || !std::isfinite(dt.ratio)) {
    throw EngageError(ErrorKind::ConfigError, "dt.ratio must be > 0");
  }
  if (eval.episodes < 1) throw EngageError(ErrorKind::ConfigError, "eval.episodes must be >= 1");
  if (eval.turn_cap < 0) throw EngageError(ErrorKind::ConfigError, "eval.turn_cap must be >= 0");
  if (eval.bon_n < 1) throw EngageError(ErrorKind::ConfigError, "eval.bon_n must be >= 1");
  if (workers < 1) throw EngageError(ErrorKind::ConfigError, "workers must be >= 1");
}

fs::path RunConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

json RunConfig::to_json() const {
  json user_j;
  if (user.kind == "http") {
    user_j = http_to_json(user.http);
  } else if (scenario == Scenario::EmotionalSupport) {
    user_j = {{"kind", "scripted"},
              {"patience", user.seeker.patience},
              {"generic_success", user.seeker.generic_success},
              {"seed", user.seeker.seed}};
  } else {
    user_j = {{"kind", "scripted"},
              {"max_warmth", user.persuadee.max_warmth},
              {"ask_threshold", user.persuadee.ask_threshold},
              {"patience", user.persuadee.patience},
              {"seed", user.persuadee.seed}};
  }
  json policy_j;
  if (policy.kind == "http") {
    policy_j = http_to_json(policy.http);
  } else {
    policy_j = {{"kind", "toy"},
                {"prior_strength", policy.prior_strength},
                {"temperature", policy.temperature}};
    if (!policy.path.empty()) policy_j["path"] = policy.path;
  }
  return json{{"scenario", std::string(to_string(scenario))},
              {"seed", seed},
              {"conditions", conditions},
              {"eval_conditions", eval_conditions.empty() ? conditions : eval_conditions},
              {"user", user_j},
              {"policy", policy_j},
              {"search", search},
              {"mining", {{"min_visits", mining.min_visits}, {"value_margin", mining.value_margin}}},
              {"reward_model",
               {{"steps", reward_model.steps},
                {"learning_rate", reward_model.learning_rate},
                {"l2", reward_model.l2},
                {"dimension", reward_model.dimension},
                {"hash_seed", reward_model.hash_seed}}},
              {"dt", {{"retry_cap", dt.retry_cap}, {"balance", dt.balance}, {"ratio", dt.ratio}}},
              {"dpo", dpo},
              {"eval",
               {{"episodes", eval.episodes}, {"turn_cap", eval.turn_cap}, {"bon_n", eval.bon_n}}},
              {"workers", workers}};
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  detail::require_object(j, "run config",
                         {"scenario", "seed", "conditions", "eval_conditions", "user", "policy",
                          "search", "mining", "reward_model", "dt", "dpo", "eval", "workers", "out"});
  RunConfig c;
  c.base_dir = base_dir;
  std::string scenario = std::string(to_string(c.scenario));
  read_opt(j, "scenario", scenario);
  try {
    c.scenario = parse_scenario(scenario);
  } catch (const EngageError& e) {
    throw EngageError(ErrorKind::ConfigError, e.message());
  }
  read_opt(j, "seed", c.seed);
  read_opt(j, "conditions", c.conditions);
  read_opt(j, "eval_conditions", c.eval_conditions);
  read_opt(j, "workers", c.workers);
  read_opt(j, "out", c.out);

  if (j.contains("user")) {
    const json& u = j.at("user");
    read_opt(u, "kind", c.user.kind);
    if (c.user.kind == "http") {
      c.user.http = parse_http(u, Role::User, c.scenario);
    } else if (c.scenario == Scenario::EmotionalSupport) {
      detail::require_object(u, "user", {"kind", "patience", "generic_success", "seed"});
      read_opt(u, "patience", c.user.seeker.patience);
      read_opt(u, "generic_success", c.user.seeker.generic_success);
      read_opt(u, "seed", c.user.seeker.seed);
    } else {
      detail::require_object(u, "user", {"kind", "max_warmth", "ask_threshold", "patience", "seed"});
      read_opt(u, "max_warmth", c.user.persuadee.max_warmth);
      read_opt(u, "ask_threshold", c.user.persuadee.ask_threshold);
      read_opt(u, "patience", c.user.persuadee.patience);
      read_opt(u, "seed", c.user.persuadee.seed);
    }
  }
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    read_opt(p, "kind", c.policy.kind);
    if (c.policy.kind == "http") {
      c.policy.http = parse_http(p, Role::Model, c.scenario);
    } else {
      detail::require_object(p, "policy", {"kind", "prior_strength", "temperature", "path"});
      read_opt(p, "prior_strength", c.policy.prior_strength);
      read_opt(p, "temperature", c.policy.temperature);
      read_opt(p, "path", c.policy.path);
    }
  }
  if (j.contains("search")) {
    try {
      c.search = j.at("search").get<SearchConfig>();
    } catch (const EngageError& e) {
      throw EngageError(ErrorKind::ConfigError, e.message());
    }
  }
  if (j.contains("mining")) {
    const json& m = j.at("mining");
    detail::require_object(m, "mining", {"min_visits", "value_margin"});
    read_opt(m, "min_visits", c.mining.min_visits);
    read_opt(m, "value_margin", c.mining.value_margin);
  }
  if (j.contains("reward_model")) {
    const json& r = j.at("reward_model");
    detail::require_object(r, "reward_model", {"steps", "learning_rate", "l2", "dimension", "hash_seed"});
    read_opt(r, "steps", c.reward_model.steps);
    read_opt(r, "learning_rate", c.reward_model.learning_rate);
    read_opt(r, "l2", c.reward_model.l2);
    read_opt(r, "dimension", c.reward_model.dimension);
    read_opt(r, "hash_seed", c.reward_model.hash_seed);
  }
  if (j.contains("dt")) {
    const json& d = j.at("dt");
    detail::require_object(d, "dt", {"retry_cap", "balance", "ratio"});
    read_opt(d, "retry_cap", c.dt.retry_cap);
    read_opt(d, "balance", c.dt.balance);
    read_opt(d, "ratio", c.dt.ratio);
  }
  if (j.contains("dpo")) {
    try {
      c.dpo = j.at("dpo").get<DpoConfig>();
    } catch (const EngageError& e) {
      throw EngageError(ErrorKind::ConfigError, e.message());
    } catch (const json::exception& e) {
      throw EngageError(ErrorKind::ConfigError, std::string("dpo: ") + e.what());
    }
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::require_object(e, "eval", {"episodes", "turn_cap", "bon_n"});
    read_opt(e, "episodes", c.eval.episodes);
    read_opt(e, "turn_cap", c.eval.turn_cap);
    read_opt(e, "bon_n", c.eval.bon_n);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const EngageError& e) {
    throw EngageError(ErrorKind::ConfigError, e.message());
  }
  try {
    return parse_run_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
  } catch (const EngageError& e) {
    if (e.kind() == ErrorKind::ParseError) throw EngageError(ErrorKind::ConfigError, e.message());
    throw;
  }
}

std::unique_ptr<AgentPolicy> make_user_simulator(const RunConfig& cfg) {
  if (cfg.user.kind == "http") return std::make_unique<HttpChatPolicy>(cfg.user.http);
  if (cfg.scenario == Scenario::EmotionalSupport) {
    return std::make_unique<ScriptedSeekerSimulator>(cfg.user.seeker);
  }
  return std::make_unique<ScriptedPersuadeeSimulator>(cfg.user.persuadee);
}

ToyPolicy make_baseline_policy(const RunConfig& cfg) {
  if (cfg.policy.kind != "toy") {
    throw EngageError(ErrorKind::ConfigError, "training needs a toy policy");
  }
  if (!cfg.policy.path.empty()) {
    try {
      return ToyPolicy::from_json(read_json_file(cfg.resolve(cfg.policy.path)));
    } catch (const EngageError& e) {
      if (e.kind() == ErrorKind::IoError) throw;
      throw EngageError(ErrorKind::ConfigError, std::string("policy.path: ") + e.message());
    }
  }
  return cfg.scenario == Scenario::EmotionalSupport
             ? make_support_baseline(cfg.policy.prior_strength, cfg.policy.temperature)
             : make_persuasion_baseline(cfg.policy.prior_strength, cfg.policy.temperature);
}

std::unique_ptr<AgentPolicy> make_model_policy(const RunConfig& cfg) {
  if (cfg.policy.kind == "http") return std::make_unique<HttpChatPolicy>(cfg.policy.http);
  return std::make_unique<ToyPolicy>(make_baseline_policy(cfg));
}

std::vector<UserCondition> load_conditions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw EngageError(ErrorKind::IoError, "cannot read conditions file " + path.string());
  try {
    auto conds = read_conditions_jsonl(in);
    if (conds.empty()) throw EngageError(ErrorKind::ConfigError, path.string() + ": no conditions");
    return conds;
  } catch (const EngageError& e) {
    throw EngageError(e.kind(), path.string() + ": " + e.message());
  }
}

}  // namespace engage
