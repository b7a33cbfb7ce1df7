#include "treerec/item_tree.hpp"

#include <algorithm>
#include <memory>
#include <unordered_set>

#include "treerec/error.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

constexpr std::string_view kResidualLabel = "misc";
constexpr std::string_view kFormatTag = "treerec-item-tree";

struct BuildNode {
  std::string label;
  std::vector<std::unique_ptr<BuildNode>> children;
  std::unordered_map<std::string, std::size_t> lookup;
  std::vector<std::string> items;

  BuildNode& child(const std::string& name) {
    auto [it, inserted] = lookup.emplace(name, children.size());
    if (inserted) {
      children.push_back(std::make_unique<BuildNode>());
      children.back()->label = name;
    }
    return *children[it->second];
  }
};

std::string residual_label(const TreeNode& parent) {
  std::string label(kResidualLabel);
  for (int suffix = 2; parent.child(label) != nullptr; ++suffix) {
    label = std::string(kResidualLabel) + "-" + std::to_string(suffix);
  }
  return label;
}

void apply_cap(TreeNode& node, std::size_t cap) {
  if (node.is_leaf()) {
    auto parts = split_oversized_leaf(node, cap);
    if (!parts.empty()) {
      node.children = std::move(parts);
      node.items.clear();
    }
    return;
  }
  for (auto& c : node.children) apply_cap(c, cap);
}

TreeNode finalize(BuildNode& src, std::size_t depth) {
  TreeNode out;
  out.label = std::move(src.label);
  out.depth = depth;
  out.children.reserve(src.children.size() + 1);
  for (auto& c : src.children) out.children.push_back(finalize(*c, depth + 1));
  if (out.children.empty()) {
    out.items = std::move(src.items);
  } else if (!src.items.empty()) {
    // Items whose path stops at an internal node go to a residual leaf.
    TreeNode residual;
    residual.label = residual_label(out);
    residual.depth = depth + 1;
    residual.synthetic = true;
    residual.items = std::move(src.items);
    out.children.push_back(std::move(residual));
  }
  return out;
}

void collect_index(const TreeNode& node, LabelPath& path,
                   std::unordered_map<std::string, LabelPath>& index) {
  if (node.is_leaf()) {
    for (const auto& id : node.items) {
      if (!index.emplace(id, path).second) throw DataError("item " + id + " appears in two leaves");
    }
    return;
  }
  for (const auto& c : node.children) {
    path.push_back(c.label);
    collect_index(c, path, index);
    path.pop_back();
  }
}

nlohmann::json node_to_json(const TreeNode& node) {
  nlohmann::json j;
  j["label"] = node.label;
  if (node.synthetic) j["synthetic"] = true;
  if (node.is_leaf()) {
    j["items"] = node.items;
  } else {
    auto& arr = j["children"] = nlohmann::json::array();
    for (const auto& c : node.children) arr.push_back(node_to_json(c));
  }
  return j;
}

TreeNode node_from_json(const nlohmann::json& j, std::size_t depth) {
  if (!j.is_object() || !j.contains("label") || !j["label"].is_string()) {
    throw DataError("tree node without a string label");
  }
  TreeNode node;
  node.label = j["label"].get<std::string>();
  node.depth = depth;
  node.synthetic = j.value("synthetic", false);
  const bool has_children = j.contains("children");
  const bool has_items = j.contains("items");
  if (has_children == has_items) {
    throw DataError("tree node '" + node.label + "' must have exactly one of children/items");
  }
  if (has_children) {
    std::unordered_set<std::string> labels;
    for (const auto& c : j["children"]) {
      node.children.push_back(node_from_json(c, depth + 1));
      if (!labels.insert(node.children.back().label).second) {
        throw DataError("duplicate child label '" + node.children.back().label + "'");
      }
    }
    if (node.children.empty()) throw DataError("internal node '" + node.label + "' has no children");
  } else {
    node.items = j["items"].get<std::vector<std::string>>();
    if (node.items.empty() && depth > 0) throw DataError("leaf '" + node.label + "' is empty");
  }
  return node;
}

void walk_stats(const TreeNode& node, TreeStats& stats) {
  if (node.depth > 0) {
    if (stats.layer_counts.size() < node.depth) stats.layer_counts.resize(node.depth, 0);
    ++stats.layer_counts[node.depth - 1];
  }
  if (node.is_leaf()) {
    ++stats.leaf_count;
    stats.depth = std::max(stats.depth, node.depth);
    stats.max_leaf_size = std::max(stats.max_leaf_size, node.items.size());
    return;
  }
  for (const auto& c : node.children) walk_stats(c, stats);
}

}  // namespace

const TreeNode* TreeNode::child(std::string_view name) const noexcept {
  for (const auto& c : children) {
    if (c.label == name) return &c;
  }
  return nullptr;
}

std::vector<TreeNode> split_oversized_leaf(const TreeNode& leaf, std::size_t cap) {
  if (cap == 0) throw std::invalid_argument("leaf cap must be >= 1");
  std::vector<TreeNode> parts;
  if (!leaf.is_leaf() || leaf.items.size() <= cap) return parts;
  const auto count = (leaf.items.size() + cap - 1) / cap;
  parts.reserve(count);
  for (std::size_t p = 0; p < count; ++p) {
    TreeNode part;
    part.label = "part-" + std::to_string(p + 1);
    part.depth = leaf.depth + 1;
    part.synthetic = true;
    const auto begin = leaf.items.begin() + static_cast<std::ptrdiff_t>(p * cap);
    const auto end = leaf.items.begin() + static_cast<std::ptrdiff_t>(std::min(leaf.items.size(), (p + 1) * cap));
    part.items.assign(begin, end);
    parts.push_back(std::move(part));
  }
  return parts;
}

ItemTree build_tree(std::span<const Item> items, std::size_t cap) {
  if (cap == 0) throw std::invalid_argument("leaf cap must be >= 1");
  ItemTree tree;
  tree.cap_ = cap;

  BuildNode root;
  std::unordered_set<std::string_view> seen;
  std::size_t kept = 0;
  for (const auto& item : items) {
    if (!seen.insert(item.id).second) throw DataError("duplicate item id: " + item.id);
    const bool usable =
        !text::trim(item.title).empty() && !item.semantic_path.empty() &&
        std::none_of(item.semantic_path.begin(), item.semantic_path.end(),
                     [](const std::string& l) { return text::trim(l).empty(); });
    if (item.id.empty() || !usable) {
      ++tree.discarded_;
      continue;
    }
    BuildNode* node = &root;
    for (const auto& label : item.semantic_path) node = &node->child(label);
    node->items.push_back(item.id);
    ++kept;
  }
  if (kept == 0) throw EmptyCatalog();

  tree.root_ = finalize(root, 0);
  apply_cap(tree.root_, cap);
  tree.rebuild_index();
  return tree;
}

void ItemTree::rebuild_index() {
  index_.clear();
  LabelPath path;
  collect_index(root_, path, index_);
}

bool ItemTree::contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

const LabelPath& ItemTree::leaf_path(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw NodeNotFound("item not in tree: " + std::string(id));
  return it->second;
}

const TreeNode& ItemTree::node_at(std::span<const std::string> path) const {
  const TreeNode* node = &root_;
  for (const auto& label : path) {
    node = node->child(label);
    if (node == nullptr) throw NodeNotFound("no node at path " + text::join({path.begin(), path.end()}, "/"));
  }
  return *node;
}

std::vector<std::string> ItemTree::leaf_subset(std::span<const std::string> path) const {
  const auto& node = node_at(path);
  if (!node.is_leaf() || node.depth == 0) {
    throw NotALeaf("node at path " + text::join({path.begin(), path.end()}, "/") + " is not a leaf");
  }
  return node.items;
}

LabelPath ItemTree::natural_path(std::span<const std::string> path) const {
  LabelPath out;
  const TreeNode* node = &root_;
  for (const auto& label : path) {
    node = node->child(label);
    if (node == nullptr) throw NodeNotFound("no node at path " + text::join({path.begin(), path.end()}, "/"));
    if (!node->synthetic) out.push_back(label);
  }
  return out;
}

nlohmann::json ItemTree::to_json() const {
  nlohmann::json doc;
  doc["format"] = kFormatTag;
  doc["version"] = 1;
  doc["cap"] = cap_ == kUnboundedCap ? nlohmann::json(nullptr) : nlohmann::json(cap_);
  doc["discarded"] = discarded_;
  doc["root"] = node_to_json(root_);
  return doc;
}

std::string ItemTree::serialize() const { return to_json().dump(1) + "\n"; }

ItemTree ItemTree::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kFormatTag) throw DataError("not an item tree document");
  ItemTree tree;
  const auto& cap = doc.at("cap");
  tree.cap_ = cap.is_null() ? kUnboundedCap : cap.get<std::size_t>();
  if (tree.cap_ == 0) throw DataError("tree cap must be >= 1");
  tree.discarded_ = doc.value("discarded", std::size_t{0});
  tree.root_ = node_from_json(doc.at("root"), 0);
  if (tree.root_.is_leaf()) throw DataError("tree root has no children");
  tree.rebuild_index();
  return tree;
}

ItemTree ItemTree::parse(std::string_view serialized) {
  auto doc = nlohmann::json::parse(serialized, nullptr, false);
  if (doc.is_discarded()) throw DataError("tree file is not valid JSON");
  try {
    return from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed tree file: ") + e.what());
  }
}

TreeStats tree_stats(const ItemTree& tree) {
  TreeStats stats;
  walk_stats(tree.root(), stats);
  return stats;
}

}  // namespace treerec
