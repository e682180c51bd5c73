#include "engage/engagement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>

#include "engage/error.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

void EngagementOutcome::validate() const {
  if (!(level >= 0.0 && level <= 1.0)) {
    throw EngageError(ErrorKind::InvariantViolation, "engagement level outside [0, 1]");
  }
  if (engaged && !terminated) {
    throw EngageError(ErrorKind::InvariantViolation, "engaged outcome is not terminated");
  }
  if (level > 0.0 && !engaged) {
    throw EngageError(ErrorKind::InvariantViolation, "positive level without engagement");
  }
}

std::string EngagementOutcome::summary() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "terminated=%s engaged=%s level=%.2f",
                terminated ? "true" : "false", engaged ? "true" : "false", level);
  return buf;
}

void to_json(json& j, const EngagementOutcome& o) {
  j = json{{"terminated", o.terminated}, {"engaged", o.engaged}, {"level", o.level}};
  if (!o.warnings.empty()) j["warnings"] = o.warnings;
}

void from_json(const json& j, EngagementOutcome& o) {
  detail::require_object(j, "terminal", {"terminated", "engaged", "level", "warnings"});
  o = EngagementOutcome{};
  o.terminated = j.at("terminated").get<bool>();
  o.engaged = j.at("engaged").get<bool>();
  o.level = j.at("level").get<double>();
  if (j.contains("warnings")) o.warnings = j.at("warnings").get<std::vector<std::string>>();
  o.validate();
}

MarkerConfig MarkerConfig::defaults() {
  MarkerConfig c;
  c.support_termination = {
      R"(\bgood\s*bye\b)",
      R"(\bbye\b)",
      R"(\bthanks?( you)? for listening\b)",
      R"(\bthat'?s all i (wanted|needed) to (say|share)\b)",
      R"(\bi have said everything\b)",
      R"(\bi('ve| have) to go( now)?\b)",
      R"(\btalk to you (later|soon)\b)",
      R"(\bi feel (much |a lot )?better now\b)",
  };
  c.negative_markers = {
      "abandon", "afraid", "agitat", "alone", "anger", "angry", "anguish", "annoy",
      "anxi", "apprehens", "ashamed", "awful", "bitter", "blame", "bored", "broken",
      "burden", "burn out", "burnout", "confus", "conflict", "cry", "defeat", "dejected",
      "depress", "desperat", "despair", "devastat", "disappoint", "discourag", "disgust",
      "distress", "doubt", "down", "drain", "dread", "embarrass", "empty", "envious",
      "exhaust", "fail", "fear", "frighten", "frustrat", "grief", "grieving", "guilt",
      "heartbroken", "helpless", "hopeless", "hurt", "inadequa", "insecur", "insomnia",
      "irritat", "isolat", "jealous", "left out", "lonel", "lost", "miserable", "nervous",
      "numb", "overwhelm", "panic", "pain", "pessimis", "pressure", "regret", "rejected",
      "resent", "restless", "sad", "scared", "shame", "shock", "sick of", "sleepless",
      "sorrow", "stress", "stuck", "suffer", "tense", "terrible", "tired", "trapped",
      "troubl", "unhappy", "unloved", "unsure", "upset", "useless", "vulnerable",
      "weary", "worri", "worry", "worthless",
  };
  c.donation_statements = {
      R"(\bi(?:'ll|'d|'m\s+going\s+to|\s+(?:think\s+i(?:'ll|\s+will)|will|would|can|could|want\s+to|am\s+going\s+to))\s+(?:like\s+to\s+)?(?:donate|give|contribute)\b)",
      R"(\bi(?:'ll|\s+will)\s+make\s+a\s+donation\b)",
      R"(\bi\s+(?:donate|pledge)\b)",
      R"(\bcount\s+me\s+in\b)",
  };
  c.refusals = {
      R"(\bi(?:\s+won't|\s+wont|\s+will\s+not|'m\s+not\s+going\s+to|\s+am\s+not\s+going\s+to|\s+don't\s+want\s+to|\s+do\s+not\s+want\s+to|\s+can't|\s+cannot|\s+can\s+not|'d\s+rather\s+not|\s+would\s+rather\s+not|\s+don't|\s+do\s+not)\s+(?:donate|give|contribute)\b)",
      R"(\bno\s+donation\b)",
      R"(\bnot\s+(?:going\s+to\s+)?donat)",
      R"(\bnot\s+interested\s+in\s+donating\b)",
  };
  return c;
}

std::vector<std::string> read_pattern_file(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(t);
  }
  return out;
}

namespace {

std::vector<std::regex> compile(const std::vector<std::string>& patterns) {
  std::vector<std::regex> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) {
    try {
      out.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw EngageError(ErrorKind::ConfigError, "bad pattern '" + p + "': " + e.what());
    }
  }
  return out;
}

bool any_match(const std::vector<std::regex>& patterns, const std::string& text) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::regex& r) { return std::regex_search(text, r); });
}

void require_user(const Turn& turn) {
  if (turn.role != Role::User) {
    throw EngageError(ErrorKind::RoleViolation, "engagement is read from user turns only");
  }
}

/// Apostrophe variants fold to ASCII so patterns need only one spelling.
std::string normalize_quotes(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.compare(i, 3, "\xE2\x80\x99") == 0) {
      out += '\'';
      i += 2;
    } else {
      out += text[i];
    }
  }
  return out;
}

}  // namespace

EngagementDetector::EngagementDetector(MarkerConfig config)
    : config_(std::move(config)),
      termination_(compile(config_.support_termination)),
      donation_(compile(config_.donation_statements)),
      refusal_(compile(config_.refusals)) {
  for (const auto& m : config_.negative_markers) negative_.push_back(to_lower(m));
}

bool EngagementDetector::is_support_termination(const std::string& text) const {
  return any_match(termination_, normalize_quotes(text));
}

EngagementOutcome EngagementDetector::detect_support(const Turn& turn) const {
  require_user(turn);
  EngagementOutcome out;
  out.terminated = is_support_termination(turn.text);
  if (!out.terminated) return out;
  if (!turn.state) {
    throw EngageError(ErrorKind::MissingState,
                      "terminal emotional-support turn carries no user state");
  }
  auto has_negative = [&](const std::vector<std::string>& phrases) {
    for (const auto& phrase : phrases) {
      const auto lower = to_lower(phrase);
      for (const auto& marker : negative_) {
        if (lower.find(marker) != std::string::npos) return true;
      }
    }
    return false;
  };
  out.engaged = !has_negative(turn.state->feelings) && !has_negative(turn.state->needs);
  out.level = out.engaged ? 1.0 : 0.0;
  return out;
}

std::vector<double> extract_amounts(const std::string& text) {
  static const std::regex kAmount(
      R"(\$\s*(\d+(?:\.\d+)?)|(\d+(?:\.\d+)?)\s*(?:dollars?|usd)\b)",
      std::regex::ECMAScript | std::regex::icase);
  std::vector<double> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kAmount);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string number = m[1].matched ? m[1].str() : m[2].str();
    out.push_back(std::stod(number));
  }
  return out;
}

EngagementOutcome EngagementDetector::detect_donation(const Turn& turn) const {
  require_user(turn);
  const std::string text = normalize_quotes(turn.text);
  const auto amounts = extract_amounts(text);
  for (double a : amounts) {
    if (a != amounts.front()) {
      std::string listed;
      for (double b : amounts) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s$%.2f", listed.empty() ? "" : ", ", b);
        listed += buf;
      }
      throw EngageError(ErrorKind::AmbiguousAmount, "conflicting amounts: " + listed);
    }
  }

  EngagementOutcome out;
  const bool statement = any_match(donation_, text);
  const bool refusal = any_match(refusal_, text);
  out.terminated = statement || refusal;
  if (!out.terminated) return out;

  if (!amounts.empty() && (statement || amounts.back() == 0.0)) {
    double amount = amounts.back();
    if (amount > kMaxDonation) {
      char buf[80];
      std::snprintf(buf, sizeof(buf), "donation $%.2f clamped to $%.2f", amount, kMaxDonation);
      out.warnings.emplace_back(buf);
      amount = kMaxDonation;
    }
    out.level = amount / kMaxDonation;
  } else if (statement && !refusal) {
    out.warnings.emplace_back("donation statement without an amount");
  }
  out.engaged = out.level > 0.0;
  return out;
}

EngagementOutcome EngagementDetector::detect(Scenario scenario, const Turn& turn) const {
  return scenario == Scenario::EmotionalSupport ? detect_support(turn) : detect_donation(turn);
}

const EngagementDetector& default_detector() {
  static const EngagementDetector detector;
  return detector;
}

}  // namespace engage
