#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "treerec/llm_backend.hpp"
#include "treerec/prompts.hpp"

namespace treerec {

// Deterministic lexical stand-in for an LLM.
//
// Profile prompts get "{1. label, 2. label, ...}": the semantic labels of the
// listed history titles, most frequent first, ties in byte order.
//
// Ranking prompts (tree search, leaf recall, re-rank, flat rank) get the top
// requested candidates by weighted overlap between each candidate's lexical
// tokens and the context. History titles (and any extra list in the prompt)
// weigh one per occurrence; profile summary entries weigh more than all of
// that together, scaled by their rank. Ties go to the lexicographically
// smaller candidate.
class MockBackend final : public Backend {
 public:
  // title -> semantic labels; the mock's "world knowledge" for profiling.
  using Knowledge = std::unordered_map<std::string, std::vector<std::string>>;

  MockBackend(TemplateSet templates, Knowledge knowledge);
  static MockBackend from_catalog(const Catalog& catalog, TemplateSet templates = TemplateSet::defaults());

  // Throws MockProtocolError for prompts it cannot attribute to a stage.
  std::string mock_reply(const ChatSession& session, std::string_view prompt) const;

 protected:
  std::string reply(const ChatSession& session, std::string_view prompt) const override {
    return mock_reply(session, prompt);
  }

 private:
  std::optional<Stage> classify(std::string_view prompt) const;
  std::string profile_reply(std::string_view prompt) const;
  std::string rank_reply(const ChatSession& session, Stage stage, std::string_view prompt) const;

  TemplateSet templates_;
  Knowledge knowledge_;
};

// "{1. a, 2. b}"
std::string format_ranked_reply(const std::vector<std::string>& entries);

}  // namespace treerec
