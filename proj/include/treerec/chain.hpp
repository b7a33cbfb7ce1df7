#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "treerec/corpus.hpp"
#include "treerec/error.hpp"
#include "treerec/item_tree.hpp"
#include "treerec/llm_backend.hpp"
#include "treerec/prompts.hpp"

namespace treerec {

struct ChainConfig {
  std::size_t n = 20;  // target list length
  std::size_t k = 5;   // items recalled per leaf
  std::size_t m = 10;  // children kept per tree-search step, at every internal node
  Perspective perspective = Perspective::interest;
  bool rerank = true;
  bool exclude_history = true;  // leaf recall never offers items the user already clicked

  // Throws ConfigError for zero sizes; returns non-fatal warnings.
  std::vector<std::string> validate() const;
  nlohmann::json to_json() const;
};

struct StageRecord {
  Stage stage = Stage::profile;
  LabelPath node;  // tree node the stage worked on; empty for profile and re-rank
  std::string prompt;
  std::string reply;
  std::vector<std::string> parsed;  // vocabulary labels recovered from the reply
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  bool malformed = false;
};

struct RecommendationTrace {
  std::string session_id;
  std::vector<std::string> history;  // item ids actually shown to the model
  std::string interest;              // profile-stage reply
  std::vector<StageRecord> stages;
  std::vector<LabelPath> visited;    // nodes in pop order
  std::vector<std::string> final_list;
  bool aborted = false;
  std::string error;

  std::size_t input_tokens() const noexcept;
  std::size_t output_tokens() const noexcept;
  nlohmann::json to_json() const;
  static RecommendationTrace from_json(const nlohmann::json& doc);  // throws DataError
};

void write_trace(const RecommendationTrace& trace, const std::filesystem::path& path);
RecommendationTrace read_trace(const std::filesystem::path& path);

// A backend failure mid-chain; carries everything recorded up to that point.
class ChainAborted : public BackendFailure {
 public:
  ChainAborted(const std::string& what, RecommendationTrace partial)
      : BackendFailure(what), partial_(std::move(partial)) {}
  const RecommendationTrace& trace() const noexcept { return partial_; }

 private:
  RecommendationTrace partial_;
};

// Shared, read-only inputs of a chain. The catalog must contain every tree
// item and may contain more (history items outside the candidate set).
struct ChainContext {
  const ItemTree& tree;
  const Catalog& catalog;
  const Backend& backend;
  const TemplateSet& templates;
  ChainConfig config;
};

// One chain execution bound to one chat session. The stage methods can be
// driven individually; run_chain() strings them together.
class ChainRun {
 public:
  ChainRun(const ChainContext& context, std::string session_id);

  // Returns the inferred interest text and keeps it in the session.
  std::string user_profile_modeling(std::span<const std::string> history_ids);
  // Ranked children of an internal node, at most min(m, |children|).
  std::vector<const TreeNode*> item_tree_search(const TreeNode& node, const LabelPath& path, std::size_t m);
  // Ranked item ids from a leaf, at most min(k, |leaf|). Empty, without a
  // model call, when every leaf item is already in the history.
  std::vector<std::string> recall_from_leaf(const TreeNode& leaf, const LabelPath& path, std::size_t k);
  // A permutation of list: the model's order first, anything it lost appended in input order.
  std::vector<std::string> diversity_rerank(const std::vector<std::string>& list);

  const ChatSession& session() const noexcept { return session_; }
  const RecommendationTrace& trace() const noexcept { return trace_; }
  RecommendationTrace& trace() noexcept { return trace_; }

 private:
  // Sends prompt, parses against matcher; one retry on malformed output.
  std::vector<std::size_t> ask_ranked(Stage stage, const LabelPath& node, const std::string& prompt,
                                      const LabelMatcher& matcher);
  std::vector<std::string> item_labels(std::span<const std::string> ids) const;

  const ChainContext& ctx_;
  ChatSession session_;
  RecommendationTrace trace_;
  std::unordered_set<std::string> clicked_;
};

struct ChainResult {
  std::vector<std::string> items;
  RecommendationTrace trace;
  ChatSession session;
};

// Depth-first search driven by model rankings: pop a node; a leaf contributes
// its recalled items, an internal node pushes its ranked children in reverse
// so the best one is expanded next. Stops at n items or an empty stack, keeps
// the first n, then optionally re-ranks for diversity.
ChainResult run_chain(const ChainContext& context, std::span<const std::string> history_ids,
                      std::string session_id = "session");

}  // namespace treerec
