#include "treerec/http_backend.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "treerec/error.hpp"

#include <httplib.h>

namespace treerec {
namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint is not a URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  config_.validate();
  if (config_.is_mock()) throw ConfigError("HttpBackend needs an http(s) endpoint");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (config_.endpoint.rfind("https://", 0) == 0) {
    throw ConfigError("this build has no TLS support; use an http:// endpoint");
  }
#endif
  std::tie(origin_, path_) = split_url(config_.endpoint);
  if (!sleeper_) {
    sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

nlohmann::json HttpBackend::build_request(const BackendConfig& config, const ChatSession& session,
                                          std::string_view prompt) {
  auto messages = nlohmann::json::array();
  for (const auto& turn : session.turns()) {
    messages.push_back({{"role", to_string(turn.role)}, {"content", turn.text}});
  }
  messages.push_back({{"role", "user"}, {"content", std::string(prompt)}});
  return {{"model", config.model}, {"messages", std::move(messages)}, {"temperature", config.temperature}};
}

std::string HttpBackend::parse_response(std::string_view body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw BackendFailure("chat completion response is not JSON");
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw BackendFailure("chat completion content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendFailure(std::string("chat completion response lacks choices[0].message.content: ") + e.what());
  }
}

std::string HttpBackend::reply(const ChatSession& session, std::string_view prompt) const {
  const auto body = build_request(config_, session, prompt).dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto seconds = static_cast<time_t>(config_.timeout_s);
  const auto micros = static_cast<time_t>((config_.timeout_s - static_cast<double>(seconds)) * 1e6);

  std::string last_failure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      sleeper_(std::chrono::duration<double>(config_.backoff_base_s * std::pow(2.0, attempt - 1)));
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    auto result = client.Post(path_, headers, body, "application/json");
    if (!result) {
      last_failure = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 200 && result->status < 300) return parse_response(result->body);
    if (!retryable_status(result->status)) throw BackendError(result->status, result->body);
    last_failure = "HTTP " + std::to_string(result->status);
  }
  throw BackendUnavailable("backend unavailable after " + std::to_string(config_.max_retries + 1) +
                           " attempts (" + last_failure + ")");
}

}  // namespace treerec
