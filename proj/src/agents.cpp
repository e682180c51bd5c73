#include "engage/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "engage/error.hpp"
#include "engage/text.hpp"

namespace engage {

// --- Help seeker ------------------------------------------------------------

const std::vector<SupportTopic>& support_topics() {
  static const std::vector<SupportTopic> topics = {
      {"work", "stressed about work deadlines", "relief from work pressure",
       "deadlines keep piling up at work", "I've been so stressed about work lately.",
       "I'm still stressed about work."},
      {"family", "hurt by constant fights with family", "peace with my family",
       "we argue at home almost every day", "I keep fighting with my family and it hurts.",
       "The fights with my family still hurt."},
      {"sleep", "exhausted because I cannot sleep", "rest and sleep",
       "I lie awake most nights", "I can barely sleep these days.",
       "I still can't sleep at night."},
      {"study", "anxious about failing my study", "confidence in my study",
       "my grades dropped this term", "I'm anxious that my study is falling apart.",
       "I'm still anxious about my study."},
      {"health", "worried about my health", "reassurance about my health",
       "I keep getting headaches", "I've been worried about my health.",
       "I'm still worried about my health."},
      {"friends", "lonely since my friends drifted away", "connection with friends",
       "nobody calls me anymore", "My friends have drifted away and I feel lonely.",
       "I still feel lonely without my friends."},
      {"money", "overwhelmed by money problems", "stability with money",
       "bills are due and savings are gone", "Money problems are overwhelming me.",
       "The money problems still overwhelm me."},
      {"future", "lost about my future", "direction for my future",
       "I don't know what to do next", "I feel lost about my future.",
       "I still feel lost about my future."},
  };
  return topics;
}

const SupportTopic& support_topic(std::string_view key) {
  for (const auto& t : support_topics()) {
    if (t.key == key) return t;
  }
  throw EngageError(ErrorKind::InvalidArgument, "unknown support topic '" + std::string(key) + "'");
}

namespace {

bool has_token(const std::vector<std::string>& tokens, std::string_view word) {
  return std::find(tokens.begin(), tokens.end(), word) != tokens.end();
}

bool has_any(const std::vector<std::string>& tokens, std::initializer_list<std::string_view> ws) {
  return std::any_of(ws.begin(), ws.end(), [&](std::string_view w) { return has_token(tokens, w); });
}

bool contains_phrase(std::string_view text, std::string_view phrase) {
  return to_lower(text).find(phrase) != std::string::npos;
}

StructuredState seeker_state(const std::vector<std::string>& remaining,
                             const std::string& current) {
  StructuredState s;
  if (!current.empty()) s.observations.push_back(support_topic(current).observation);
  for (const auto& key : remaining) {
    const auto& t = support_topic(key);
    s.feelings.push_back(t.feeling);
    s.needs.push_back(t.need);
  }
  if (!remaining.empty()) s.requests.emplace_back("someone to listen");
  return s;
}

std::vector<std::string> remaining_from_state(const std::vector<std::string>& concerns,
                                              const StructuredState& state) {
  std::vector<std::string> out;
  for (const auto& key : concerns) {
    const auto& feeling = support_topic(key).feeling;
    if (std::find(state.feelings.begin(), state.feelings.end(), feeling) != state.feelings.end()) {
      out.push_back(key);
    }
  }
  return out;
}

const StructuredState& require_state(const Turn& turn) {
  if (!turn.state) {
    throw EngageError(ErrorKind::MissingState, "help-seeker turn in context has no state");
  }
  return *turn.state;
}

}  // namespace

SupportReply classify_support_reply(std::string_view text, std::string_view topic_key) {
  const auto tokens = tokenize(text);
  const bool advice = has_any(tokens, {"try", "tried", "should", "aside", "instead"});
  if (advice) return SupportReply::Other;
  const bool empathic = has_any(tokens, {"sounds", "feel", "feels", "hear", "understand"});
  if (empathic && has_token(tokens, topic_key)) return SupportReply::Reflection;
  if (contains_phrase(text, "tell me more")) return SupportReply::OpenQuestion;
  return SupportReply::Other;
}

ScriptedSeekerSimulator::ScriptedSeekerSimulator(SeekerConfig config) : config_(config) {
  if (config_.patience < 1) throw EngageError(ErrorKind::InvalidArgument, "patience must be >= 1");
  if (!(config_.generic_success >= 0.0 && config_.generic_success <= 1.0)) {
    throw EngageError(ErrorKind::InvalidArgument, "generic_success must lie in [0, 1]");
  }
}

std::vector<std::string> ScriptedSeekerSimulator::concerns_for(const UserCondition& condition) {
  const auto tokens = tokenize(condition.description);
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& topic : support_topics()) {
    const auto it = std::find(tokens.begin(), tokens.end(), topic.key);
    if (it != tokens.end()) found.emplace_back(it - tokens.begin(), topic.key);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& [pos, key] : found) out.push_back(std::move(key));
  if (out.empty()) {
    throw EngageError(ErrorKind::InvalidArgument,
                      "condition '" + condition.id + "' names no known support topic");
  }
  return out;
}

int ScriptedSeekerSimulator::failures_in(std::span<const Turn> context) {
  int failures = 0;
  std::size_t previous = 0;
  bool first = true;
  for (const auto& turn : context) {
    if (turn.role != Role::User) continue;
    const std::size_t open = require_state(turn).feelings.size();
    if (!first && open >= previous && open > 0) ++failures;
    previous = open;
    first = false;
  }
  return failures;
}

Turn ScriptedSeekerSimulator::respond(const UserCondition& condition,
                                      std::span<const Turn> context, std::uint64_t seed) const {
  validate_context_for(Role::User, context);
  const auto concerns = concerns_for(condition);

  if (context.empty()) {
    return Turn(Role::User, support_topic(concerns.front()).opening,
                seeker_state(concerns, concerns.front()));
  }

  const auto& last_user = context[context.size() - 2];
  auto remaining = remaining_from_state(concerns, require_state(last_user));
  if (remaining.empty()) {
    throw EngageError(ErrorKind::InvalidArgument, "help seeker already finished");
  }
  const auto& current = support_topic(remaining.front());
  const auto reply = classify_support_reply(context.back().text, current.key);

  bool success = reply == SupportReply::Reflection;
  if (reply == SupportReply::OpenQuestion) {
    Rng rng(derive_seed(seed ^ config_.seed, "open-question"));
    success = rng.uniform() < config_.generic_success;
  }

  if (success) {
    remaining.erase(remaining.begin());
    if (remaining.empty()) {
      return Turn(Role::User,
                  "Thank you for listening. I have said everything I needed to say. " +
                      std::string(kSeekerFarewell),
                  StructuredState{});
    }
    const auto& next = support_topic(remaining.front());
    return Turn(Role::User, "Yes, exactly. It helps to say it out loud. There is more: " +
                                next.opening,
                seeker_state(remaining, next.key));
  }

  if (failures_in(context) + 1 >= config_.patience) {
    return Turn(Role::User, "I don't think this is helping. " + std::string(kSeekerFarewell),
                seeker_state(remaining, current.key));
  }
  return Turn(Role::User, "That's not really what I meant. " + current.restate,
              seeker_state(remaining, current.key));
}

std::vector<ToyPolicy::Response> support_vocabulary() {
  std::vector<ToyPolicy::Response> vocab;
  for (const auto& t : support_topics()) {
    StructuredState predicted;
    predicted.feelings.push_back(t.feeling);
    predicted.needs.push_back(t.need);
    vocab.push_back({"It sounds like " + t.key + " has been weighing on you. How does that feel?",
                     predicted});
  }
  StructuredState listen;
  listen.requests.emplace_back("someone to listen");
  vocab.push_back({"Can you tell me more about what is on your mind?", listen});
  StructuredState rest;
  rest.needs.emplace_back("a short rest");
  vocab.push_back({"Have you tried taking a break to relax?", rest});
  StructuredState plans;
  plans.observations.emplace_back("wants to make plans");
  vocab.push_back({"Let's set that aside and talk about your plans instead.", plans});
  return vocab;
}

ToyPolicy make_support_baseline(double prior_strength, double temperature) {
  ToyPolicy policy(support_vocabulary(), temperature);
  const auto& topics = support_topics();
  for (std::size_t i = 0; i < topics.size(); ++i) {
    policy.add_token_weight(i, "u:" + topics[i].key, prior_strength);
  }
  return policy;
}

// --- Persuadee --------------------------------------------------------------

PersuasionReply classify_persuasion_reply(std::string_view text) {
  const auto tokens = tokenize(text);
  const bool pushy = has_any(tokens, {"should", "must", "least"}) ||
                     contains_phrase(text, "right now");
  if (pushy) return PersuasionReply::Pushy;
  const bool asks = has_any(tokens, {"donate", "donation", "contribute"}) &&
                    text.find('?') != std::string_view::npos;
  if (asks) return PersuasionReply::Ask;
  if (has_any(tokens, {"children", "charity", "donations", "kids", "school", "save"}) ||
      contains_phrase(text, "how are you")) {
    return PersuasionReply::Inform;
  }
  return PersuasionReply::Filler;
}

ScriptedPersuadeeSimulator::ScriptedPersuadeeSimulator(PersuadeeConfig config) : config_(config) {
  if (config_.max_warmth < 1 || config_.ask_threshold < 0 ||
      config_.ask_threshold > config_.max_warmth || config_.patience < 1) {
    throw EngageError(ErrorKind::InvalidArgument, "invalid persuadee configuration");
  }
}

std::map<std::string, std::string> ScriptedPersuadeeSimulator::parse_profile(
    std::string_view description) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos <= description.size()) {
    auto end = description.find_first_of(";,", pos);
    if (end == std::string_view::npos) end = description.size();
    const auto item = description.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq != std::string_view::npos) {
      out[to_lower(trim(item.substr(0, eq)))] = trim(item.substr(eq + 1));
    }
    pos = end + 1;
  }
  return out;
}

int ScriptedPersuadeeSimulator::initial_warmth(const UserCondition& condition) const {
  const auto profile = parse_profile(condition.description);
  for (const char* key : {"agreeableness", "agreeable"}) {
    const auto it = profile.find(key);
    if (it == profile.end()) continue;
    try {
      return std::stod(it->second) >= 4.0 ? 1 : 0;
    } catch (const std::exception&) {
      throw EngageError(ErrorKind::InvalidArgument,
                        "profile value for '" + std::string(key) + "' is not a number");
    }
  }
  return 0;
}

namespace {

/// Warmth transition for one model reply given earlier model replies.
int next_warmth(int warmth, PersuasionReply reply, bool novel, const PersuadeeConfig& cfg) {
  switch (reply) {
    case PersuasionReply::Inform: return novel ? std::min(warmth + 1, cfg.max_warmth) : warmth;
    case PersuasionReply::Pushy: return std::max(warmth - 1, 0);
    case PersuasionReply::Ask:
      return warmth >= cfg.ask_threshold ? warmth : std::max(warmth - 1, 0);
    case PersuasionReply::Filler: return warmth;
  }
  return warmth;
}

}  // namespace

int ScriptedPersuadeeSimulator::warmth_before_last(const UserCondition& condition,
                                                   std::span<const Turn> context) const {
  int warmth = initial_warmth(condition);
  std::set<std::string> seen;
  const std::size_t end = (!context.empty() && context.back().role == Role::Model)
                              ? context.size() - 1
                              : context.size();
  for (std::size_t i = 0; i < end; ++i) {
    if (context[i].role != Role::Model) continue;
    const bool novel = seen.insert(context[i].text).second;
    warmth = next_warmth(warmth, classify_persuasion_reply(context[i].text), novel, config_);
  }
  return warmth;
}

double ScriptedPersuadeeSimulator::donation_for(int warmth) const {
  const double raw = 2.0 * warmth / config_.max_warmth;
  return std::round(raw * 100.0) / 100.0;
}

std::string format_dollars(double amount) {
  char buf[32];
  if (amount == std::floor(amount)) {
    std::snprintf(buf, sizeof(buf), "$%.0f", amount);
  } else {
    std::snprintf(buf, sizeof(buf), "$%.2f", amount);
  }
  return buf;
}

Turn ScriptedPersuadeeSimulator::respond(const UserCondition& condition,
                                         std::span<const Turn> context,
                                         std::uint64_t seed) const {
  validate_context_for(Role::User, context);
  if (context.empty()) {
    return Turn(Role::User, "Hi! I'm doing okay. What is this about?");
  }

  const std::string& last = context.back().text;
  const int before = warmth_before_last(condition, context);
  bool novel = true;
  for (std::size_t i = 0; i + 1 < context.size(); ++i) {
    if (context[i].role == Role::Model && context[i].text == last) novel = false;
  }
  const auto reply = classify_persuasion_reply(last);
  const int warmth = next_warmth(before, reply, novel, config_);

  auto decide = [&](const std::string& lead) {
    const double amount = donation_for(warmth);
    if (amount > 0.0) return Turn(Role::User, lead + "I think I will donate " + format_dollars(amount) + ".");
    return Turn(Role::User, lead + "I won't donate this time, so $0 from me.");
  };

  if (reply == PersuasionReply::Ask && before >= config_.ask_threshold) return decide("");

  const std::size_t user_turns = (context.size() + 1) / 2;
  if (static_cast<int>(user_turns) >= config_.patience) return decide("I have to go now. ");

  // Paraphrase choice is the only use of the seed.
  Rng rng(derive_seed(seed ^ config_.seed, "persuadee"));
  const bool alt = rng.uniform() < 0.5;
  switch (reply) {
    case PersuasionReply::Inform:
      if (novel) {
        return Turn(Role::User, alt ? "That is great to know. Thank you for all the information!"
                                    : "Wow, that is good to hear. Thanks for telling me!");
      }
      return Turn(Role::User, "Okay, you mentioned that already.");
    case PersuasionReply::Pushy:
      return Turn(Role::User, alt ? "That feels pushy, and I am a bit annoyed."
                                  : "Please don't pressure me like that.");
    case PersuasionReply::Ask:
      return Turn(Role::User, "Hmm, I'm unsure. I don't know much about it yet.");
    case PersuasionReply::Filler:
      return Turn(Role::User, alt ? "Okay." : "Alright.");
  }
  return Turn(Role::User, "Okay.");
}

std::vector<ToyPolicy::Response> persuasion_vocabulary() {
  return {
      {"How are you doing today?", std::nullopt},
      {"All donations are used to help children in need.", std::nullopt},
      {"Many children lack food and school supplies.", std::nullopt},
      {"Save the Children works in over 100 countries.", std::nullopt},
      {"Would you be willing to donate to Save the Children today?", std::nullopt},
      {"You really should donate right now, it is the least you can do.", std::nullopt},
      {"You're welcome!", std::nullopt},
  };
}

ToyPolicy make_persuasion_baseline(double prior_strength, double temperature) {
  ToyPolicy policy(persuasion_vocabulary(), temperature);
  // Weak preference for asking once the persuadee sounds positive.
  policy.add_token_weight(4, "u:great", prior_strength);
  policy.add_token_weight(4, "u:good", prior_strength);
  return policy;
}

}  // namespace engage
