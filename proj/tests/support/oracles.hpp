#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "treerec/corpus.hpp"
#include "treerec/item_tree.hpp"
#include "treerec/llm_backend.hpp"
#include "treerec/rng.hpp"

namespace treerec::testing {

// Brute-force metric oracles: linear scans, no hashing, natural-log discount.
double oracle_recall(const std::vector<std::string>& ranked, const std::vector<std::string>& relevant,
                     std::size_t cutoff);
double oracle_ndcg(const std::vector<std::string>& ranked, const std::vector<std::string>& relevant,
                   std::size_t cutoff);

// Stable pseudo-random priority of a label; lower ranks first.
std::uint64_t priority(std::string_view label, std::uint64_t salt);

// Ranks every candidate of every ranking prompt by priority(label, salt) and
// answers profile prompts with a fixed summary. Stands in for a model whose
// per-node preferences are fixed in advance.
class ForcedBackend final : public Backend {
 public:
  explicit ForcedBackend(std::uint64_t salt) : salt_(salt) {}

 protected:
  std::string reply(const ChatSession& session, std::string_view prompt) const override;

 private:
  std::uint64_t salt_;
};

struct ReferenceRun {
  std::vector<LabelPath> leaves;  // leaves that were asked for items, in order
  std::vector<std::string> list;  // truncated to n
};

// Recursive DFS over the same rankings ForcedBackend produces.
ReferenceRun reference_dfs(const ItemTree& tree, const Catalog& catalog, std::uint64_t salt, std::size_t n,
                           std::size_t k, std::size_t m);

// Random catalog with path depths in [1, max_depth] over a small label
// alphabet so siblings collide, plus a sprinkle of items without a title or
// path. Titles of kept items are unique.
std::vector<Item> random_catalog(Rng& rng, std::size_t size, std::size_t max_depth);

// Random tree catalog whose leaves all hold exactly `leaf_size` items.
std::vector<Item> full_leaf_catalog(Rng& rng, std::size_t leaves, std::size_t leaf_size, std::size_t max_depth);

// Reply mixing vocabulary labels, truncated labels and junk in assorted
// numbering styles.
std::string fuzz_reply(Rng& rng, const std::vector<std::string>& vocabulary);

// Independent recursive walk collecting (leaf path, items).
void walk_leaves(const TreeNode& node, LabelPath& path, std::vector<std::pair<LabelPath, std::vector<std::string>>>& out);

}  // namespace treerec::testing
