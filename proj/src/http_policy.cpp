#include "engage/http_policy.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "engage/error.hpp"
#include "engage/text.hpp"

namespace engage {

using nlohmann::json;

void HttpPolicyConfig::apply_environment() {
  if (const char* v = std::getenv("ENGAGE_API_BASE"); v && *v) base_url = v;
  if (const char* v = std::getenv("ENGAGE_API_KEY"); v && *v) api_key = v;
  if (const char* v = std::getenv("ENGAGE_MODEL"); v && *v) model = v;
}

void HttpPolicyConfig::validate() const {
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw EngageError(ErrorKind::ConfigError, "base_url must start with http:// or https://");
  }
  if (model.empty()) throw EngageError(ErrorKind::ConfigError, "model name is empty");
  if (timeout.count() <= 0) throw EngageError(ErrorKind::ConfigError, "timeout must be > 0");
  if (max_retries < 0) throw EngageError(ErrorKind::ConfigError, "max_retries must be >= 0");
  if (backoff_initial.count() < 0 || backoff_max < backoff_initial) {
    throw EngageError(ErrorKind::ConfigError, "invalid backoff bounds");
  }
}

std::string default_system_prompt(Scenario scenario, Role role) {
  if (role == Role::User) {
    return "You are role-playing a user with the following background: {condition}\n"
           "Reply with the user's next utterance only.";
  }
  if (scenario == Scenario::EmotionalSupport) {
    return "You are a supportive listener talking with a help-seeker. Before replying, write "
           "your estimate of the help-seeker's state between <state> and </state> as four "
           "lines: Observations:, Feelings:, Needs:, Requests: (phrases separated by ';'). "
           "Then write your reply.";
  }
  return "You are talking with a user about donating to Save the Children. Build trust, "
         "share what the charity does, and invite a donation of up to $2 when the user is "
         "ready. Reply with your next utterance only.";
}

ParsedCompletion parse_completion(std::string_view completion) {
  ParsedCompletion out;
  const auto open = completion.find("<state>");
  const auto close =
      open == std::string_view::npos ? std::string_view::npos : completion.find("</state>", open);
  if (open == std::string_view::npos || close == std::string_view::npos) {
    out.text = trim(completion);
    return out;
  }
  const auto inner = completion.substr(open + 7, close - open - 7);
  try {
    out.state = StructuredState::from_block(inner);
  } catch (const EngageError&) {
    out.state.reset();
  }
  std::string visible(completion.substr(0, open));
  visible += completion.substr(close + 8);
  out.text = trim(visible);
  return out;
}

json build_chat_request(const HttpPolicyConfig& cfg, const UserCondition& condition,
                        std::span<const Turn> context, std::uint64_t seed) {
  std::string prompt =
      cfg.system_prompt.empty() ? default_system_prompt(cfg.scenario, cfg.role) : cfg.system_prompt;
  if (auto pos = prompt.find("{condition}"); pos != std::string::npos) {
    prompt.replace(pos, 11, condition.description);
  }
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", prompt}});
  for (const auto& turn : context) {
    // The responder's own turns are "assistant"; the other side is "user".
    const bool own = turn.role == cfg.role;
    messages.push_back({{"role", own ? "assistant" : "user"}, {"content", turn.text}});
  }
  return json{{"model", cfg.model},
              {"messages", std::move(messages)},
              {"temperature", cfg.temperature},
              {"seed", seed}};
}

HttpChatPolicy::HttpChatPolicy(HttpPolicyConfig config) : config_(std::move(config)) {
  config_.validate();
}

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint split_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint e;
  e.scheme_host_port = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

}  // namespace

Turn HttpChatPolicy::respond(const UserCondition& condition, std::span<const Turn> context,
                             std::uint64_t seed) const {
  validate_context_for(config_.role, context);
  const auto endpoint = split_url(config_.base_url);
  const std::string body = build_chat_request(config_, condition, context, seed).dump();

  std::string last_error = "no attempt made";
  auto backoff = config_.backoff_initial;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, config_.backoff_max);
    }

    httplib::Client client(endpoint.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      if (res->status >= 400 && res->status < 500 && res->status != 429) break;
      continue;
    }
    try {
      const auto reply = json::parse(res->body);
      const auto content =
          reply.at("choices").at(0).at("message").at("content").get<std::string>();
      auto parsed = parse_completion(content);
      if (parsed.text.empty()) {
        last_error = "empty completion";
        continue;
      }
      std::optional<StructuredState> state = std::move(parsed.state);
      return Turn(config_.role, std::move(parsed.text), std::move(state));
    } catch (const json::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
    }
  }
  throw EngageError(ErrorKind::BackendUnavailable,
                    config_.base_url + " after " + std::to_string(config_.max_retries + 1) +
                        " attempt(s): " + last_error);
}

}  // namespace engage
