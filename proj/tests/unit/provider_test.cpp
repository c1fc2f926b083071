#include <doctest.h>

#include <httplib.h>
#include <thread>

#include "synthabsa/errors.hpp"
#include "synthabsa/provider.hpp"
#include "synthabsa/simulated.hpp"

using namespace synthabsa;

TEST_CASE("fixture stub rules") {
  FixtureStubProvider stub(nlohmann::json::parse(R"({
    "rules": [
      {"contains": "flaky", "fail_times": 2, "text": "finally"},
      {"contains": "broken", "fail": true},
      {"regex": "^echo", "echo_prompt": true},
      {"contains": "long", "text": "cut", "status": "incomplete"}
    ],
    "default": {"text": "default"}
  })"));
  CHECK_THROWS_AS(stub.complete({"1", "flaky", 0}), TransportError);
  CHECK_THROWS_AS(stub.complete({"2", "flaky", 0}), TransportError);
  CHECK(stub.complete({"3", "flaky", 0}).text == "finally");
  CHECK_THROWS_AS(stub.complete({"4", "broken", 0}), TransportError);
  CHECK(stub.complete({"5", "echo me", 0}).text == "echo me");
  CHECK(stub.complete({"6", "long one", 0}).status == CompletionStatus::incomplete);
  CHECK(stub.complete({"7", "other", 0}).text == "default");
  CHECK(stub.calls() == 7);
  CHECK_THROWS_AS(FixtureStubProvider(nlohmann::json::parse(R"({"rules": [{"text": "no matcher"}]})")), SchemaError);
  FixtureStubProvider strict(nlohmann::json::parse(R"({"rules": []})"));
  CHECK_THROWS_AS(strict.complete({"1", "x", 0}), TransportError);
}

TEST_CASE("retries ride out a flaky fixture rule") {
  FixtureStubProvider stub(nlohmann::json::parse(R"({"rules": [{"contains": "x", "fail_times": 2, "text": "ok"}]})"));
  DispatchOptions d;
  d.initial_backoff = std::chrono::milliseconds(1);
  const std::vector<CompletionRequest> reqs = {{"a", "x", 0}};
  const auto out = dispatch_batch(stub, reqs, d);
  REQUIRE(out[0].ok());
  CHECK(out[0].attempts == 3);
}

TEST_CASE("mismatched response ids are transport errors") {
  FunctionProvider wrong([](const CompletionRequest&) { return CompletionResponse{"other", "x"}; });
  DispatchOptions d;
  d.max_retries = 0;
  std::string err;
  CHECK_FALSE(complete_with_retries(wrong, {"a", "p", 0}, d, &err));
  CHECK(err.find("does not match") != std::string::npos);
}

TEST_CASE("http provider speaks the JSON contract") {
  httplib::Server server;
  std::string seen_auth;
  int failures = 1;
  server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    if (body["prompt"] == "fail-once" && failures-- > 0) {
      res.status = 503;
      return;
    }
    const bool capped = body["max_output_tokens"] == 1;
    res.set_content(nlohmann::json{{"id", body["id"]},
                                   {"text", "echo: " + body["prompt"].get<std::string>()},
                                   {"status", capped ? "incomplete" : "completed"}}
                        .dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
  cfg.token = "secret";
  cfg.timeout = std::chrono::seconds(5);
  HttpProvider http(cfg);
  const auto r = http.complete({"q1", "hello", 0});
  CHECK(r.id == "q1");
  CHECK(r.text == "echo: hello");
  CHECK(r.status == CompletionStatus::completed);
  CHECK(seen_auth == "Bearer secret");
  CHECK(http.complete({"q2", "hello", 1}).status == CompletionStatus::incomplete);
  CHECK_THROWS_AS(http.complete({"q3", "fail-once", 0}), TransportError);

  failures = 1;
  DispatchOptions d;
  d.initial_backoff = std::chrono::milliseconds(1);
  const std::vector<CompletionRequest> reqs = {{"q4", "fail-once", 0}, {"q5", "fine", 0}};
  const auto out = dispatch_batch(http, reqs, d);
  CHECK(out[0].ok());
  CHECK(out[1].ok());

  server.stop();
  t.join();
  CHECK_THROWS_AS(http.complete({"q6", "down", 0}), TransportError);
  CHECK_THROWS_AS(HttpProvider(HttpProviderConfig{"localhost:80", "", std::chrono::seconds(1)}), ArgumentError);
}

TEST_CASE("simulator cues and triggers") {
  CHECK(simulated_cues().size() == 20);
  CHECK(simulated_trigger("workload", Sentiment::positive).ends_with("plus"));
  CHECK(simulated_trigger("workload", Sentiment::negative).ends_with("minus"));
  CHECK_THROWS_AS(simulated_trigger("parking", Sentiment::neutral), ArgumentError);
  SimulatedProvider sim;
  const LabelSet l{{"clarity", Sentiment::positive}, {"workload", Sentiment::negative}};
  const auto text = sim.write_review(l, 120, 7);
  CHECK(count_words(text) == 120);
  CHECK(sim.annotate(text) == l);
}
