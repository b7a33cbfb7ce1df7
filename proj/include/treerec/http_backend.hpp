#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "treerec/llm_backend.hpp"

namespace treerec {

// OpenAI-style chat-completions client. Every call sends the whole session
// plus the new prompt. Transport failures and 429/5xx responses are retried
// with exponential backoff; other non-2xx statuses fail immediately.
class HttpBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  explicit HttpBackend(BackendConfig config, Sleeper sleeper = {});

  const BackendConfig& config() const noexcept { return config_; }

  static nlohmann::json build_request(const BackendConfig& config, const ChatSession& session,
                                      std::string_view prompt);
  // Content of the first choice's message.
  static std::string parse_response(std::string_view body);

  static bool retryable_status(int status) noexcept {
    return status == 408 || status == 429 || (status >= 500 && status <= 599);
  }

 protected:
  std::string reply(const ChatSession& session, std::string_view prompt) const override;

 private:
  BackendConfig config_;
  Sleeper sleeper_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
};

}  // namespace treerec
