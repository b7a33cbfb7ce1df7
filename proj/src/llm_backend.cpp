#include "treerec/llm_backend.hpp"

#include <fstream>

#include "treerec/error.hpp"
#include "treerec/http_backend.hpp"
#include "treerec/mock_backend.hpp"
#include "treerec/text.hpp"

namespace treerec {

std::size_t count_tokens(std::string_view text) noexcept {
  std::size_t n = 0;
  bool in_unit = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_unit) ++n;
    in_unit = !space;
  }
  return n;
}

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

void ChatSession::add_system(std::string text) {
  if (!turns_.empty()) throw std::logic_error("system turn must come first");
  const auto tokens = count_tokens(text);
  input_tokens_ += tokens;
  turns_.push_back({Role::system, std::move(text), tokens});
}

void ChatSession::append_exchange(std::string prompt, std::string reply) {
  const auto in = count_tokens(prompt);
  const auto out = count_tokens(reply);
  turns_.push_back({Role::user, std::move(prompt), in});
  turns_.push_back({Role::assistant, std::move(reply), out});
  input_tokens_ += in;
  output_tokens_ += out;
}

nlohmann::json ChatSession::to_json() const {
  nlohmann::json doc;
  doc["session_id"] = id_;
  auto& turns = doc["turns"] = nlohmann::json::array();
  for (const auto& t : turns_) {
    turns.push_back({{"role", to_string(t.role)}, {"text", t.text}, {"tokens", t.tokens}});
  }
  doc["input_tokens"] = input_tokens_;
  doc["output_tokens"] = output_tokens_;
  return doc;
}

void write_transcript(const ChatSession& session, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write transcript " + path.string());
  out << session.to_json().dump(2) << '\n';
}

void BackendConfig::validate() const {
  if (endpoint.empty()) throw ConfigError("backend endpoint must not be empty");
  if (max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
  if (!(timeout_s > 0)) throw ConfigError("backend timeout must be > 0");
  if (backoff_base_s < 0) throw ConfigError("backend backoff base must be >= 0");
  if (!is_mock() && endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw ConfigError("backend endpoint must be \"mock\" or an http(s) URL, got " + endpoint);
  }
}

std::string Backend::complete(ChatSession& session, std::string_view prompt) const {
  if (text::trim(prompt).empty()) throw std::invalid_argument("prompt must not be empty");
  auto answer = reply(session, prompt);
  session.append_exchange(std::string(prompt), answer);
  return answer;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config, const Catalog& catalog,
                                      const TemplateSet& templates) {
  config.validate();
  if (config.is_mock()) return std::make_unique<MockBackend>(MockBackend::from_catalog(catalog, templates));
  return std::make_unique<HttpBackend>(config);
}

}  // namespace treerec
