#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "uqevo/evolution.hpp"

namespace uqevo {

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /v1/chat/completions
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw EvolutionError("endpoint URL must include a scheme: '" + url + "'");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

}  // namespace

HttpMutationClient::HttpMutationClient(HttpClientConfig config)
    : config_(std::move(config)) {
  if (config_.endpoint_url.empty())
    throw EvolutionError("http client: endpoint URL is required");
  split_url(config_.endpoint_url);  // validate eagerly
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw EvolutionError("http client: environment variable '" +
                           config_.api_key_env + "' is not set");
    api_key_ = key;
  }
}

std::string HttpMutationClient::name() const {
  return config_.model.empty() ? "http" : config_.model;
}

std::string HttpMutationClient::propose_one(const PromptBundle& prompt, int) {
  SplitUrl url = split_url(config_.endpoint_url);

  nlohmann::ordered_json request;
  request["model"] = config_.model;
  request["messages"] = nlohmann::ordered_json::array(
      {{{"role", "user"}, {"content", prompt.text}}});
  request["temperature"] = config_.temperature;
  request["max_tokens"] = config_.max_tokens;
  const std::string body = request.dump();

  const int attempts_allowed = 1 + std::max(0, config_.max_retries);
  std::string last_error;
  for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
    if (attempt > 1 && config_.backoff_base_ms > 0) {
      auto delay = std::chrono::milliseconds(config_.backoff_base_ms) *
                   (1LL << (attempt - 2));
      std::this_thread::sleep_for(delay);
    }

    httplib::Client client(url.base);
    client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ClientError("http client: non-retryable HTTP " +
                            std::to_string(res->status) + " after " +
                            std::to_string(attempt) + " attempt(s)",
                        attempt);
    }
    try {
      auto response = nlohmann::json::parse(res->body);
      return response.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ClientError(std::string("http client: malformed response: ") + e.what(),
                        attempt);
    }
  }
  throw ClientError("http client: retry budget exhausted after " +
                        std::to_string(attempts_allowed) + " attempt(s); last: " +
                        last_error,
                    attempts_allowed);
}

}  // namespace uqevo
