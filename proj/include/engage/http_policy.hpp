#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "engage/dialogue.hpp"

namespace engage {

struct HttpPolicyConfig {
  std::string base_url;            // e.g. http://localhost:8000/v1
  std::string api_key;             // sent as a bearer token when non-empty
  std::string model;
  double temperature = 0.7;
  std::string system_prompt;       // "{condition}" is replaced by the condition text
  Role role = Role::Model;         // Role::User turns this into a user simulator
  Scenario scenario = Scenario::EmotionalSupport;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{250};
  std::chrono::milliseconds backoff_max{4000};

  /// Fills base_url, api_key and model from ENGAGE_API_BASE, ENGAGE_API_KEY
  /// and ENGAGE_MODEL where those are set.
  void apply_environment();
  void validate() const;
};

std::string default_system_prompt(Scenario scenario, Role role);

/// Splits a completion into its visible text and the optional predicted state
/// found between <state> and </state>. A missing or unparseable section
/// yields no state.
struct ParsedCompletion {
  std::string text;
  std::optional<StructuredState> state;
};
ParsedCompletion parse_completion(std::string_view completion);

/// Chat-completions request body for a conversation, seen from `cfg.role`.
nlohmann::json build_chat_request(const HttpPolicyConfig& cfg, const UserCondition& condition,
                                  std::span<const Turn> context, std::uint64_t seed);

/// Agent backed by an OpenAI-compatible chat-completions endpoint. Every call
/// owns its client, so concurrent calls are safe.
class HttpChatPolicy final : public AgentPolicy {
 public:
  explicit HttpChatPolicy(HttpPolicyConfig config);

  Role role() const override { return config_.role; }
  std::string name() const override { return "http:" + config_.model; }

  /// Throws BackendUnavailable once retries are exhausted, including when
  /// every attempt returned an empty completion.
  Turn respond(const UserCondition& condition, std::span<const Turn> context,
               std::uint64_t seed) const override;

  const HttpPolicyConfig& config() const { return config_; }

 private:
  HttpPolicyConfig config_;
};

}  // namespace engage
