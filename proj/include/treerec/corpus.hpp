#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace treerec {

inline constexpr std::size_t kMaxHistory = 50;

// A catalog entry. semantic_path runs coarse to fine, e.g. {"sports", "football_nfl"}.
struct Item {
  std::string id;
  std::string title;
  std::vector<std::string> semantic_path;
  std::optional<std::string> description;

  friend bool operator==(const Item&, const Item&) = default;
};

// One user's impression: click history (oldest first), clicked impressions,
// and every impression shown.
struct Interaction {
  std::string user_id;
  std::vector<std::string> history;
  std::vector<std::string> positives;
  std::vector<std::string> candidates;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

template <typename T>
struct Loaded {
  std::vector<T> records;
  std::size_t skipped = 0;  // malformed or duplicate rows
};

// MIND news.tsv: id, category, subcategory, title[, abstract, url, entities...].
// Throws EmptyCatalog when no row survives.
Loaded<Item> parse_mind_catalog(std::istream& in);
Loaded<Item> load_mind_catalog(const std::filesystem::path& path);

// One JSON object per line with id, title, semantic_path (or path) and an
// optional description. Path depth may vary between records.
Loaded<Item> parse_catalog_records(std::istream& in);
Loaded<Item> load_catalog_records(const std::filesystem::path& path);

// MIND behaviors.tsv: impression id, user id, time, "N1 N2 ...", "N3-1 N4-0 ...".
Loaded<Interaction> parse_behaviors(std::istream& in);
Loaded<Interaction> load_behaviors(const std::filesystem::path& path);

// Keeps the most recent `max` clicks (a suffix of the history).
Interaction truncate_history(Interaction interaction, std::size_t max = kMaxHistory);

// Immutable id-indexed view over a list of items.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Item> items);

  std::span<const Item> items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  const Item* find(std::string_view id) const;
  const Item& at(std::string_view id) const;  // throws DataError
  bool contains(std::string_view id) const { return find(id) != nullptr; }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct ResolveStats {
  std::size_t dropped_history = 0;
  std::size_t dropped_positives = 0;
  std::size_t dropped_candidates = 0;

  std::size_t total() const noexcept { return dropped_history + dropped_positives + dropped_candidates; }
};

// Drops ids the catalog does not know. Returns how many were removed.
ResolveStats resolve_against(const Catalog& catalog, std::vector<Interaction>& interactions);

}  // namespace treerec
