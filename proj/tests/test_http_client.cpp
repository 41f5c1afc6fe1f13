#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "test_support.hpp"
#include "uqevo/evolution.hpp"

using namespace uqevo;

namespace {

// Local chat-completion stub; each test configures the handler.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string chat_body(const std::string& content) {
  nlohmann::json j;
  j["choices"] = {{{"message", {{"role", "assistant"}, {"content", content}}}}};
  return j.dump();
}

PromptBundle trivial_bundle() {
  PromptBundle b;
  b.text = "propose something";
  b.parent_sources = {"-sum(lp)"};
  return b;
}

}  // namespace

TEST_CASE("http client retries a 500 then succeeds") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    // The request carries the chat-completion shape.
    auto body = nlohmann::json::parse(req.body);
    CHECK(body.at("messages").at(0).at("role") == "user");
    CHECK(body.contains("temperature"));
    if (calls.fetch_add(1) == 0) {
      res.status = 500;
      res.set_content("boom", "text/plain");
    } else {
      res.set_content(chat_body("```\n-sum(lp) * 2\n```"), "application/json");
    }
  });

  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  cfg.model = "stub-model";
  cfg.max_retries = 2;
  cfg.backoff_base_ms = 0;
  HttpMutationClient client(cfg);
  std::string text = client.propose_one(trivial_bundle(), 0);
  CHECK(text.find("-sum(lp) * 2") != std::string::npos);
  CHECK(calls.load() == 2);
}

TEST_CASE("http client fails fast on non-retryable status") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.status = 404;
    res.set_content("nope", "text/plain");
  });

  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  cfg.max_retries = 3;
  cfg.backoff_base_ms = 0;
  HttpMutationClient client(cfg);
  try {
    client.propose_one(trivial_bundle(), 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.attempts == 1);
    CHECK(std::string(e.what()).find("404") != std::string::npos);
  }
  CHECK(calls.load() == 1);
}

TEST_CASE("http client exhausts its retry budget on persistent 500s") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.status = 503;
  });

  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  cfg.max_retries = 2;
  cfg.backoff_base_ms = 0;
  HttpMutationClient client(cfg);
  try {
    client.propose_one(trivial_bundle(), 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.attempts == 3);  // 1 initial + 2 retries
  }
  CHECK(calls.load() == 3);
}

TEST_CASE("http client sends the API key from the configured env var") {
  setenv("UQEVO_TEST_KEY", "sk-test-123", 1);
  std::string seen_auth;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    auto it = req.headers.find("Authorization");
    if (it != req.headers.end()) seen_auth = it->second;
    res.set_content(chat_body("ok"), "application/json");
  });

  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  cfg.api_key_env = "UQEVO_TEST_KEY";
  HttpMutationClient client(cfg);
  client.propose_one(trivial_bundle(), 0);
  CHECK(seen_auth == "Bearer sk-test-123");
}

TEST_CASE("missing API key env var is a startup error naming the variable") {
  unsetenv("UQEVO_DEFINITELY_UNSET");
  HttpClientConfig cfg;
  cfg.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
  cfg.api_key_env = "UQEVO_DEFINITELY_UNSET";
  CHECK_THROWS_WITH_AS(HttpMutationClient{cfg},
                       doctest::Contains("UQEVO_DEFINITELY_UNSET"), EvolutionError);
}

TEST_CASE("per-request timeout exhausts the retry budget with attempt count") {
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content(chat_body("too late"), "application/json");
  });

  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  cfg.timeout_ms = 50;
  cfg.max_retries = 1;
  cfg.backoff_base_ms = 0;
  HttpMutationClient client(cfg);
  try {
    client.propose_one(trivial_bundle(), 0);
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.attempts == 2);
    CHECK(std::string(e.what()).find("2 attempt") != std::string::npos);
  }
}

TEST_CASE("run_evolution works end-to-end over the HTTP client") {
  // The stub replies with a fixed improvement; the loop should log it under
  // the configured model name and dedup the repeats.
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_body("```\n-sum(lp) / n\n```"), "application/json");
  });

  SyntheticConfig synth;
  synth.n_samples = 60;
  synth.min_len = 4;
  synth.max_len = 10;
  synth.planted_weights = {{"mean_logprob", 3.0}};
  synth.noise = 0.4;
  synth.seed = 55;
  Dataset train = generate_synthetic(synth);

  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  cfg.model = "stub-model";
  cfg.backoff_base_ms = 0;
  HttpMutationClient client(cfg);

  EvolutionConfig config;
  config.rounds = 3;
  config.candidates_per_round = 2;
  config.seed = 8;
  auto dir = testsup::fresh_dir("http_evolve");
  EvolutionRun run = run_evolution(config, train, client, dir.string());

  // 1 seed + 2 proposals per round.
  CHECK(run.candidates.size() == 7);
  int evaluated = 0, duplicates = 0;
  for (const auto& c : run.candidates) {
    if (c.round == 0) continue;
    CHECK(c.proposer == "stub-model");
    CHECK(c.source == "-sum(lp) / n");
    if (c.failed()) {
      CHECK(c.failure_reason.find("duplicate") != std::string::npos);
      ++duplicates;
    } else {
      ++evaluated;
    }
  }
  CHECK(evaluated == 1);
  CHECK(duplicates == 5);
}

TEST_CASE("malformed server response is a client error") {
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"unexpected\": true}", "application/json");
  });
  HttpClientConfig cfg;
  cfg.endpoint_url = server.endpoint();
  HttpMutationClient client(cfg);
  CHECK_THROWS_AS(client.propose_one(trivial_bundle(), 0), ClientError);
}
