#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "engage/error.hpp"
#include "engage/http_policy.hpp"

using namespace engage;
using nlohmann::json;

namespace {

// Local chat-completions stub. `reply` maps the attempt number to (status, content).
class StubServer {
 public:
  using Reply = std::function<std::pair<int, std::string>(int attempt, const json& request)>;

  explicit StubServer(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int attempt = calls_++;
      last_request_ = json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      auto [status, content] = reply_(attempt, last_request_);
      res.status = status;
      res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  HttpPolicyConfig config() const {
    HttpPolicyConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model = "stub";
    c.max_retries = 2;
    c.backoff_initial = std::chrono::milliseconds(1);
    c.backoff_max = std::chrono::milliseconds(2);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
  }
  int calls() const { return calls_; }
  const json& last_request() const { return last_request_; }
  const std::string& last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  Reply reply_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  json last_request_;
  std::string last_auth_;
};

const UserCondition kCond{Scenario::EmotionalSupport, "worried about work", "h"};

}  // namespace

TEST_CASE("completion parsing") {
  const auto p = parse_completion(
      "That sounds hard. <state>Observations: deadlines\nFeelings: stressed\nNeeds:\nRequests:</state>");
  CHECK(p.text == "That sounds hard.");
  REQUIRE(p.state);
  CHECK(p.state->feelings == std::vector<std::string>{"stressed"});
  CHECK_FALSE(parse_completion("plain reply").state);
  const auto broken = parse_completion("hi <state>garbage</state>");
  CHECK(broken.text == "hi");
  CHECK_FALSE(broken.state);
}

TEST_CASE("chat request layout") {
  HttpPolicyConfig c;
  c.base_url = "http://x/v1";
  c.model = "m";
  c.system_prompt = "You help: {condition}";
  const std::vector<Turn> ctx{Turn(Role::User, "hello"), Turn(Role::Model, "hi"), Turn(Role::User, "so")};
  const auto j = build_chat_request(c, kCond, ctx, 42);
  CHECK(j["messages"][0]["content"] == "You help: worried about work");
  CHECK(j["messages"][1]["role"] == "user");
  CHECK(j["messages"][2]["role"] == "assistant");
  CHECK(j["seed"] == 42);
  c.role = Role::User;
  CHECK(build_chat_request(c, kCond, ctx, 1)["messages"][1]["role"] == "assistant");
}

TEST_CASE("http policy success path") {
  StubServer stub([](int, const json&) {
    return std::pair{200, std::string("I hear you. <state>Observations: work\nFeelings: tired\nNeeds: rest\n"
                                      "Requests: listen</state>")};
  });
  auto cfg = stub.config();
  cfg.api_key = "secret";
  const HttpChatPolicy policy(cfg);
  CHECK(policy.name() == "http:stub");
  const std::vector<Turn> ctx{Turn(Role::User, "my job is too much")};
  const Turn t = policy.respond(kCond, ctx, 7);
  CHECK(t.role == Role::Model);
  CHECK(t.text == "I hear you.");
  REQUIRE(t.state);
  CHECK(t.state->needs == std::vector<std::string>{"rest"});
  CHECK(stub.calls() == 1);
  CHECK(stub.last_auth() == "Bearer secret");
  CHECK(stub.last_request()["model"] == "stub");
  CHECK_THROWS_AS(policy.respond(kCond, std::vector<Turn>{}, 7), EngageError);
}

TEST_CASE("http policy retries then recovers") {
  StubServer stub([](int attempt, const json&) {
    return attempt < 2 ? std::pair{503, std::string("busy")} : std::pair{200, std::string("ok then")};
  });
  const HttpChatPolicy policy(stub.config());
  CHECK(policy.respond(kCond, std::vector<Turn>{Turn(Role::User, "hi")}, 1).text == "ok then");
  CHECK(stub.calls() == 3);
}

TEST_CASE("http policy gives up with BackendUnavailable") {
  SUBCASE("server errors") {
    StubServer stub([](int, const json&) { return std::pair{500, std::string("x")}; });
    const HttpChatPolicy policy(stub.config());
    try {
      policy.respond(kCond, std::vector<Turn>{Turn(Role::User, "hi")}, 1);
      FAIL("expected failure");
    } catch (const EngageError& e) {
      CHECK(e.kind() == ErrorKind::BackendUnavailable);
    }
    CHECK(stub.calls() == 3);
  }
  SUBCASE("empty completions") {
    StubServer stub([](int, const json&) { return std::pair{200, std::string("   ")}; });
    const HttpChatPolicy policy(stub.config());
    CHECK_THROWS_WITH_AS(policy.respond(kCond, std::vector<Turn>{Turn(Role::User, "hi")}, 1),
                         doctest::Contains("empty completion"), EngageError);
    CHECK(stub.calls() == 3);
  }
  SUBCASE("client errors are not retried") {
    StubServer stub([](int, const json&) { return std::pair{400, std::string("bad")}; });
    const HttpChatPolicy policy(stub.config());
    CHECK_THROWS_AS(policy.respond(kCond, std::vector<Turn>{Turn(Role::User, "hi")}, 1), EngageError);
    CHECK(stub.calls() == 1);
  }
  SUBCASE("nothing listening") {
    HttpPolicyConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.model = "none";
    c.max_retries = 1;
    c.backoff_initial = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(500);
    CHECK_THROWS_WITH_AS(HttpChatPolicy(c).respond(kCond, std::vector<Turn>{Turn(Role::User, "hi")}, 1),
                         doctest::Contains("BackendUnavailable"), EngageError);
  }
}

TEST_CASE("http config validation") {
  HttpPolicyConfig c;
  CHECK_THROWS_AS(c.validate(), EngageError);
  c.base_url = "ftp://nowhere";
  c.model = "m";
  CHECK_THROWS_AS(c.validate(), EngageError);
}
