#include <doctest.h>

#include <sstream>

#include "engage/dialogue.hpp"
#include "engage/error.hpp"
#include "engage/text.hpp"

using namespace engage;

namespace {

UserCondition es_condition() {
  return {Scenario::EmotionalSupport, "A student struggling with work and sleep.", "c1"};
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const EngageError& e) {
    return e.kind();
  }
  FAIL("expected an EngageError");
  return ErrorKind::InvariantViolation;
}

}  // namespace

TEST_CASE("append_turn enforces alternation and keeps the original") {
  const Conversation empty("x", es_condition());
  const auto one = append_turn(empty, Turn(Role::User, "hi"));
  CHECK(one.size() == 1);
  CHECK(empty.size() == 0);
  CHECK(kind_of([&] { append_turn(one, Turn(Role::User, "again")); }) == ErrorKind::RoleViolation);
  CHECK(kind_of([&] { append_turn(empty, Turn(Role::Model, "hello")); }) == ErrorKind::RoleViolation);
  const auto two = append_turn(one, Turn(Role::Model, "hello"));
  REQUIRE(two.size() == 2);
  CHECK(two.turns()[1].role == Role::Model);
  CHECK(two.turns()[1].text == "hello");
}

TEST_CASE("context_for_model") {
  const Conversation empty("x", es_condition());
  CHECK(context_for_model(empty).empty());
  const Conversation c3("x", es_condition(),
                        {Turn(Role::User, "u0"), Turn(Role::Model, "a1"), Turn(Role::User, "u2")});
  const auto ctx = context_for_model(c3);
  REQUIRE(ctx.size() == 3);
  CHECK(ctx[0].text == "u0");
  CHECK(ctx[2].text == "u2");
  const Conversation c2("x", es_condition(), {Turn(Role::User, "u0"), Turn(Role::Model, "a1")});
  CHECK(kind_of([&] { context_for_model(c2); }) == ErrorKind::RoleViolation);
}

TEST_CASE("turn and condition validation") {
  CHECK(kind_of([] { Turn(Role::User, ""); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] { Conversation("x", es_condition(), {Turn(Role::Model, "a")}); }) ==
        ErrorKind::RoleViolation);
  UserCondition bad{Scenario::Persuasion, "", "p"};
  CHECK_THROWS_AS(bad.validate(), EngageError);
  CHECK(kind_of([] { validate_context_for(Role::User, std::vector<Turn>{Turn(Role::User, "u")}); }) ==
        ErrorKind::RoleViolation);
  CHECK_NOTHROW(validate_context_for(Role::Model, std::vector<Turn>{Turn(Role::User, "u")}));
  CHECK_NOTHROW(validate_context_for(Role::User, std::vector<Turn>{}));
}

TEST_CASE("state block format round trip") {
  StructuredState s;
  s.observations = {"deadlines keep piling up", "boss is upset"};
  s.feelings = {"stressed"};
  s.requests = {"someone to listen"};
  const std::string block = s.to_block();
  CHECK(block ==
        "Observations: deadlines keep piling up; boss is upset\nFeelings: stressed\nNeeds:\n"
        "Requests: someone to listen");
  CHECK(StructuredState::from_block(block) == s);

  const auto loose = StructuredState::from_block("feelings：tired ; sad\nNEEDS: rest");
  CHECK(loose.feelings == std::vector<std::string>{"tired", "sad"});
  CHECK(loose.needs == std::vector<std::string>{"rest"});
  CHECK(kind_of([] { StructuredState::from_block("Moods: happy"); }) == ErrorKind::ParseError);

  StructuredState bad;
  bad.needs = {"a; b"};
  CHECK(kind_of([&] { bad.to_block(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("same_phrases ignores order") {
  StructuredState a, b;
  a.feelings = {"x", "y"};
  b.feelings = {"y", "x"};
  CHECK(a.same_phrases(b));
  CHECK_FALSE(a == b);
  b.needs = {"z"};
  CHECK_FALSE(a.same_phrases(b));
}

TEST_CASE("conversation JSON round trip") {
  StructuredState s;
  s.feelings = {"anxious about exams"};
  s.needs = {"confidence"};
  const Conversation conv("conv-1", es_condition(),
                          {Turn(Role::User, "I'm anxious.", s), Turn(Role::Model, "It sounds hard."),
                           Turn(Role::User, "Ünïcode ok", StructuredState{})});
  std::stringstream ss;
  write_conversations_jsonl(ss, std::vector<Conversation>{conv, conv});
  const auto back = read_conversations_jsonl(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == conv);
  CHECK(back[1] == conv);

  nlohmann::json t = Turn(Role::Model, "x");
  CHECK_FALSE(t.contains("state"));
  t["extra"] = 1;
  CHECK(kind_of([&] { t.get<Turn>(); }) == ErrorKind::ParseError);
}

TEST_CASE("JSONL errors carry the line number") {
  std::stringstream ss;
  ss << R"({"scenario":"persuasion","description":"agreeableness=3","id":"a"})" << "\n\n"
     << R"({"scenario":"persuasion","description":"x","id":"b"})" << "\n"
     << R"({"scenario":"nope","description":"x","id":"c"})" << "\n";
  try {
    read_conditions_jsonl(ss);
    FAIL("expected a parse error");
  } catch (const EngageError& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("tokenize and seeds") {
  CHECK(tokenize("I'm SO tired -- can't sleep!") ==
        std::vector<std::string>{"i'm", "so", "tired", "can't", "sleep"});
  CHECK(tokenize("").empty());
  CHECK(derive_seed(7, "explore") == derive_seed(7, "explore"));
  CHECK(derive_seed(7, "explore") != derive_seed(7, "mine"));
  CHECK(derive_seed(7, std::uint64_t{1}) != derive_seed(7, std::uint64_t{2}));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
}

TEST_CASE("error kinds map to exit codes") {
  CHECK(exit_code_for(ErrorKind::ConfigError) == 2);
  CHECK(exit_code_for(ErrorKind::ParseError) == 2);
  CHECK(exit_code_for(ErrorKind::BackendUnavailable) == 3);
  CHECK(exit_code_for(ErrorKind::InvariantViolation) == 4);
  const EngageError e(ErrorKind::ZeroVector, "empty");
  CHECK(std::string(e.what()) == "ZeroVector: empty");
  CHECK(e.message() == "empty");
}
