#include <doctest.h>

#include <fstream>
#include <sstream>

#include "engage/engagement.hpp"
#include "engage/error.hpp"

using namespace engage;
using nlohmann::json;

namespace {

std::string outcome_or_error(Scenario scenario, const Turn& turn, std::vector<std::string>* warnings) {
  try {
    const auto o = default_detector().detect(scenario, turn);
    if (warnings) *warnings = o.warnings;
    return o.summary();
  } catch (const EngageError& e) {
    return "error:" + std::string(to_string(e.kind()));
  }
}

}  // namespace

TEST_CASE("engagement fixture") {
  std::ifstream in(ENGAGE_TEST_DATA "/engagement_fixture.jsonl");
  REQUIRE(in.good());
  std::string line;
  int cases = 0, support = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto scenario = parse_scenario(j.at("scenario").get<std::string>());
    std::optional<StructuredState> state;
    if (j.contains("state")) state = j.at("state").get<StructuredState>();
    const Turn turn(Role::User, j.at("text").get<std::string>(), state);
    std::vector<std::string> warnings;
    INFO(j.at("name").get<std::string>());
    CHECK(outcome_or_error(scenario, turn, &warnings) == j.at("expect").get<std::string>());
    CHECK(warnings == j.at("warnings").get<std::vector<std::string>>());
    ++cases;
    support += scenario == Scenario::EmotionalSupport;
  }
  CHECK(cases == 40);
  CHECK(support == 20);
}

TEST_CASE("detectors require user turns") {
  const Turn model(Role::Model, "Goodbye");
  CHECK_THROWS_AS(default_detector().detect_support(model), EngageError);
  CHECK_THROWS_AS(default_detector().detect_donation(model), EngageError);
}

TEST_CASE("donation level is the clamped amount over two") {
  for (int cents = 0; cents <= 500; cents += 7) {
    char text[64];
    std::snprintf(text, sizeof(text), "I will donate $%d.%02d", cents / 100, cents % 100);
    const auto o = default_detector().detect_donation(Turn(Role::User, text));
    const double amount = cents / 100.0;
    CHECK(o.terminated);
    CHECK(o.level == doctest::Approx(std::min(amount, 2.0) / 2.0).epsilon(1e-12));
    CHECK((o.level >= 0.0 && o.level <= 1.0));
    CHECK(o.engaged == (cents > 0));
    CHECK_NOTHROW(o.validate());
  }
}

TEST_CASE("extract_amounts") {
  CHECK(extract_amounts("I'll give $0.50 and 3 dollars") == std::vector<double>{0.5, 3.0});
  CHECK(extract_amounts("nothing").empty());
}

TEST_CASE("ambiguous amounts name both values") {
  try {
    default_detector().detect_donation(Turn(Role::User, "I can give $1 or maybe $2."));
    FAIL("expected AmbiguousAmount");
  } catch (const EngageError& e) {
    CHECK(e.kind() == ErrorKind::AmbiguousAmount);
    CHECK(e.message().find("$1.00, $2.00") != std::string::npos);
  }
}

TEST_CASE("outcome invariants and JSON") {
  EngagementOutcome bad{false, true, 0.0, {}};
  CHECK_THROWS_AS(bad.validate(), EngageError);
  EngagementOutcome level_without{true, false, 0.5, {}};
  CHECK_THROWS_AS(level_without.validate(), EngageError);
  EngagementOutcome ok{true, true, 0.25, {"note"}};
  const json j = ok;
  CHECK(j.get<EngagementOutcome>() == ok);
}

TEST_CASE("custom pattern files") {
  std::istringstream in("# termination\n\\bsee ya\\b\n\n");
  auto patterns = read_pattern_file(in);
  CHECK(patterns == std::vector<std::string>{"\\bsee ya\\b"});
  MarkerConfig cfg = MarkerConfig::defaults();
  cfg.support_termination = patterns;
  cfg.negative_markers = {"grumpy"};
  const EngagementDetector det(cfg);
  StructuredState s;
  s.feelings = {"Grumpy"};
  CHECK(det.detect_support(Turn(Role::User, "see ya", s)).summary() ==
        "terminated=true engaged=false level=0.00");
  CHECK_FALSE(det.detect_support(Turn(Role::User, "Goodbye", s)).terminated);
  MarkerConfig broken = MarkerConfig::defaults();
  broken.refusals = {"(unclosed"};
  CHECK_THROWS_AS(EngagementDetector{broken}, EngageError);
  CHECK(MarkerConfig::defaults().negative_markers.size() >= 90);
}
