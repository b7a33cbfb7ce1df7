#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace treerec {

class Catalog;
class TemplateSet;

// Whitespace-delimited units. Additive: count(a + " " + b) == count(a) + count(b).
std::size_t count_tokens(std::string_view text) noexcept;

enum class Role { system, user, assistant };
std::string_view to_string(Role r) noexcept;

struct Turn {
  Role role;
  std::string text;
  std::size_t tokens = 0;  // count_tokens(text); input for system/user, output for assistant
};

// Ordered conversation carried across every stage of one recommendation chain.
// Not synchronised: one session belongs to one chain at a time.
class ChatSession {
 public:
  explicit ChatSession(std::string id = {}) : id_(std::move(id)) {}

  const std::string& id() const noexcept { return id_; }
  std::span<const Turn> turns() const noexcept { return turns_; }

  // Only valid before any other turn.
  void add_system(std::string text);
  // Records a completed user -> assistant exchange.
  void append_exchange(std::string prompt, std::string reply);

  std::size_t input_tokens() const noexcept { return input_tokens_; }
  std::size_t output_tokens() const noexcept { return output_tokens_; }

  nlohmann::json to_json() const;

 private:
  std::string id_;
  std::vector<Turn> turns_;
  std::size_t input_tokens_ = 0;
  std::size_t output_tokens_ = 0;
};

void write_transcript(const ChatSession& session, const std::filesystem::path& path);

struct BackendConfig {
  std::string endpoint = "mock";  // "mock" or an http(s) chat-completions URL
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_retries = 3;
  double backoff_base_s = 1.0;
  double timeout_s = 60.0;
  std::string api_key_env = "OPENAI_API_KEY";

  bool is_mock() const noexcept { return endpoint == "mock"; }
  void validate() const;  // throws ConfigError
};

// Chat-completion backend shared by many concurrent sessions; implementations
// must be safe to call from several threads with distinct sessions.
class Backend {
 public:
  virtual ~Backend() = default;

  // Sends prompt in the context of session and appends both turns on success.
  // The session is left untouched when the backend throws.
  std::string complete(ChatSession& session, std::string_view prompt) const;

 protected:
  virtual std::string reply(const ChatSession& session, std::string_view prompt) const = 0;
};

// Builds the backend named by config.endpoint. The mock needs the catalog
// (its stand-in for world knowledge) and the template set it must recognise.
std::unique_ptr<Backend> make_backend(const BackendConfig& config, const Catalog& catalog,
                                      const TemplateSet& templates);

}  // namespace treerec
