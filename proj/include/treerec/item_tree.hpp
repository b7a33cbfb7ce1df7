#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "treerec/corpus.hpp"

namespace treerec {

inline constexpr std::size_t kDefaultLeafCap = 50;
inline constexpr std::size_t kUnboundedCap = std::numeric_limits<std::size_t>::max();

using LabelPath = std::vector<std::string>;

// A node either has children or holds items, never both. Nodes the builder
// invents (residual "misc" leaves, "part-j" chunks) are flagged synthetic.
struct TreeNode {
  std::string label;
  std::size_t depth = 0;
  bool synthetic = false;
  std::vector<TreeNode> children;
  std::vector<std::string> items;

  bool is_leaf() const noexcept { return children.empty(); }
  const TreeNode* child(std::string_view name) const noexcept;
};

// Hierarchical partition of a catalog by semantic path. Immutable once built.
class ItemTree {
 public:
  const TreeNode& root() const noexcept { return root_; }
  std::size_t cap() const noexcept { return cap_; }
  std::size_t item_count() const noexcept { return index_.size(); }
  std::size_t discarded() const noexcept { return discarded_; }

  bool contains(std::string_view id) const;
  // Root-to-leaf labels (synthetic labels included) of the leaf holding id.
  const LabelPath& leaf_path(std::string_view id) const;  // throws NodeNotFound

  const TreeNode& node_at(std::span<const std::string> path) const;  // throws NodeNotFound
  std::vector<std::string> leaf_subset(std::span<const std::string> path) const;

  // Same path with synthetic labels removed.
  LabelPath natural_path(std::span<const std::string> path) const;

  nlohmann::json to_json() const;
  std::string serialize() const;
  static ItemTree from_json(const nlohmann::json& doc);  // throws DataError
  static ItemTree parse(std::string_view serialized);

 private:
  friend ItemTree build_tree(std::span<const Item> items, std::size_t cap);
  void rebuild_index();

  TreeNode root_;
  std::size_t cap_ = kDefaultLeafCap;
  std::size_t discarded_ = 0;
  std::unordered_map<std::string, LabelPath> index_;
};

// Items without a title or semantic path are discarded (counted in discarded()).
// Throws EmptyCatalog when nothing is left, DataError on duplicate ids.
ItemTree build_tree(std::span<const Item> items, std::size_t cap = kDefaultLeafCap);

// Chunks an oversized leaf into "part-1".."part-j" children of at most cap
// items each, in stored order. Returns nothing when the leaf already fits.
std::vector<TreeNode> split_oversized_leaf(const TreeNode& leaf, std::size_t cap);

struct TreeStats {
  std::size_t depth = 0;
  std::vector<std::size_t> layer_counts;  // layer 1 first, root excluded
  std::size_t leaf_count = 0;
  std::size_t max_leaf_size = 0;

  friend bool operator==(const TreeStats&, const TreeStats&) = default;
};

TreeStats tree_stats(const ItemTree& tree);

}  // namespace treerec
