#pragma once

#include <iosfwd>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/dialogue.hpp"

namespace engage {

/// End-of-conversation signal read from a single user turn.
/// Invariants: engaged => terminated; level > 0 => engaged; level in [0, 1].
struct EngagementOutcome {
  bool terminated = false;
  bool engaged = false;
  double level = 0.0;
  std::vector<std::string> warnings;

  void validate() const;
  /// Canonical single-line form, e.g. "terminated=true engaged=true level=1.00".
  std::string summary() const;

  bool operator==(const EngagementOutcome&) const = default;
};

void to_json(nlohmann::json& j, const EngagementOutcome& o);
void from_json(const nlohmann::json& j, EngagementOutcome& o);

/// Regex patterns and the negative-marker lexicon used by the detectors.
struct MarkerConfig {
  std::vector<std::string> support_termination;
  std::vector<std::string> negative_markers;
  std::vector<std::string> donation_statements;
  std::vector<std::string> refusals;

  static MarkerConfig defaults();
};

/// One pattern per line; blank lines and '#' comments ignored.
std::vector<std::string> read_pattern_file(std::istream& in);

class EngagementDetector {
 public:
  explicit EngagementDetector(MarkerConfig config = MarkerConfig::defaults());

  /// Terminated iff the text hits a termination marker. Engaged iff
  /// terminated and no feeling or need phrase contains a negative marker.
  /// Throws MissingState when terminated without a state.
  EngagementOutcome detect_support(const Turn& turn) const;

  /// Terminated iff a donation statement or a refusal matches. The level is
  /// min(amount, 2) / 2 for a stated amount; a refusal without one gives 0.
  /// Throws AmbiguousAmount when the text names two different amounts.
  EngagementOutcome detect_donation(const Turn& turn) const;

  EngagementOutcome detect(Scenario scenario, const Turn& turn) const;

  bool is_support_termination(const std::string& text) const;
  const MarkerConfig& config() const { return config_; }

 private:
  MarkerConfig config_;
  std::vector<std::regex> termination_;
  std::vector<std::regex> donation_;
  std::vector<std::regex> refusal_;
  std::vector<std::string> negative_;
};

const EngagementDetector& default_detector();

/// Dollar amounts in order of appearance ("$2", "$ 0.50", "3 dollars").
std::vector<double> extract_amounts(const std::string& text);

inline constexpr double kMaxDonation = 2.0;

}  // namespace engage
