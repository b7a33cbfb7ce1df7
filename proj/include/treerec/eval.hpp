#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "treerec/chain.hpp"
#include "treerec/corpus.hpp"
#include "treerec/item_tree.hpp"
#include "treerec/llm_backend.hpp"
#include "treerec/metrics.hpp"
#include "treerec/prompts.hpp"

namespace treerec {

struct EvalConfig {
  std::size_t cutoff = 20;       // K in Recall@K / NDCG@K
  std::size_t leaf_fill = 50;    // candidate leaves are padded to this size
  std::size_t flat_sample = 100; // candidates shown to the flat ranker
  std::uint64_t seed = 42;
  std::size_t test_users = 500;
  std::size_t max_history = kMaxHistory;
  std::size_t parallelism = 1;   // W: concurrent chains

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
};

struct CandidateSet {
  std::vector<Item> items;
  std::size_t dropped_positives = 0;  // ids missing from the catalog or tree
  std::size_t touched_leaves = 0;
};

// Groups positives by their leaf in full_tree and pads every touched leaf with
// uniformly sampled same-leaf negatives up to leaf_fill (or the whole leaf if
// smaller). Items keep catalog leaf order.
CandidateSet build_candidate_set(const Catalog& catalog, const ItemTree& full_tree,
                                 std::span<const std::string> positives, std::size_t leaf_fill, std::uint64_t seed);
// Same, over the catalog's natural (uncapped) tree.
CandidateSet build_candidate_set(const Catalog& catalog, std::span<const std::string> positives,
                                 std::size_t leaf_fill, std::uint64_t seed);

// Items ordered by number of distinct users who clicked them (history or
// positive impression), ties by id. Optionally restricted to an id set.
std::vector<std::string> popularity_baseline(std::span<const Interaction> train, std::size_t cutoff,
                                             const IdSet* restrict_to = nullptr);

struct FlatRankResult {
  std::vector<std::string> ranked;
  std::vector<std::string> sampled;
  std::vector<StageRecord> stages;
};

// Single-prompt ranking over a seeded uniform sample of the candidates.
FlatRankResult flat_ranker_baseline(ChatSession& session, const Backend& backend, const TemplateSet& templates,
                                    const Catalog& catalog, std::span<const std::string> history_ids,
                                    std::span<const std::string> candidates, std::size_t sample_size,
                                    std::uint64_t seed, std::size_t count, Perspective perspective);

// Input tokens of one prompt that enumerates every candidate.
std::size_t full_enumeration_tokens(const TemplateSet& templates, const Catalog& catalog,
                                    std::span<const std::string> history_ids, std::span<const std::string> candidates,
                                    std::size_t count, Perspective perspective);

struct StageTokens {
  std::size_t input = 0;
  std::size_t output = 0;
  double input_share = 0.0;
  double output_share = 0.0;
};

struct TokenReport {
  std::array<StageTokens, kChainStages.size()> stages{};  // indexed like kChainStages
  std::size_t total_input = 0;
  std::size_t total_output = 0;
  std::size_t sessions = 0;

  const StageTokens& of(Stage s) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

TokenReport token_report(std::span<const RecommendationTrace> traces);

struct Diagnostics {
  std::size_t interactions = 0;
  std::size_t dropped_history_ids = 0;
  std::size_t dropped_positive_ids = 0;
  std::size_t users_without_history = 0;
  std::size_t dropped_candidate_positives = 0;
  std::size_t test_users = 0;
  std::size_t train_users = 0;
  std::size_t candidate_items = 0;
  std::size_t candidate_leaves = 0;
  std::size_t skipped_catalog_rows = 0;    // filled in by callers that load files
  std::size_t skipped_behavior_rows = 0;

  nlohmann::json to_json() const;
};

// Everything evaluation derives from the raw data before any model call.
struct EvalSetup {
  std::vector<Interaction> test;  // resolved, truncated, non-empty history
  std::vector<Interaction> train;
  Catalog candidates;
  ItemTree candidate_tree;
  Diagnostics diagnostics;
};

EvalSetup prepare_evaluation(const Catalog& catalog, std::span<const Interaction> interactions,
                             const EvalConfig& config);

struct UserResult {
  std::string user_id;
  std::vector<std::string> ranked;
  std::optional<double> recall;
  std::optional<double> ndcg;
  std::size_t relevant = 0;
  std::size_t distinct_leaves = 0;
};

struct EvalReport {
  ChainConfig chain;
  EvalConfig eval;
  std::vector<UserResult> users;
  double mean_recall = 0.0;
  double mean_ndcg = 0.0;
  double mean_distinct_leaves = 0.0;
  std::size_t scored_users = 0;
  std::size_t excluded_users = 0;
  TokenReport tokens;
  Diagnostics diagnostics;

  nlohmann::json to_json() const;
  std::string serialize() const;
  std::string per_user_csv() const;
};

struct EvalRun {
  EvalReport report;
  std::vector<RecommendationTrace> traces;
};

// Runs one chain per test user over the shared candidate tree. evaluate()
// uses up to eval.parallelism OpenMP threads; evaluate_serial() is the
// single-threaded reference and must produce the identical report.
EvalRun evaluate(const Catalog& catalog, std::span<const Interaction> interactions, const ChainConfig& chain,
                 const EvalConfig& eval, const Backend& backend, const TemplateSet& templates);
EvalRun evaluate_serial(const Catalog& catalog, std::span<const Interaction> interactions, const ChainConfig& chain,
                        const EvalConfig& eval, const Backend& backend, const TemplateSet& templates);
EvalRun evaluate_prepared(const EvalSetup& setup, const Catalog& catalog, const ChainConfig& chain,
                          const EvalConfig& eval, const Backend& backend, const TemplateSet& templates,
                          bool parallel = true);

struct SweepPoint {
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double distinct_leaves = 0.0;  // mean per user
};

std::vector<SweepPoint> k_sweep(std::span<const std::size_t> ks, const EvalSetup& setup, const Catalog& catalog,
                                const ChainConfig& chain, const EvalConfig& eval, const Backend& backend,
                                const TemplateSet& templates);
std::string sweep_csv(std::span<const SweepPoint> points);

struct BaselineRow {
  std::string method;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t scored_users = 0;
  std::size_t input_tokens = 0;
};

struct BaselineComparison {
  std::vector<BaselineRow> rows;  // treerec, flat_ranker, popularity
  nlohmann::json to_json() const;
  std::string table() const;
};

BaselineComparison compare_baselines(const EvalSetup& setup, const Catalog& catalog, const ChainConfig& chain,
                                     const EvalConfig& eval, const Backend& backend, const TemplateSet& templates);

}  // namespace treerec
