#include "treerec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <unordered_set>

#include <json.hpp>

#include "treerec/error.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::optional<std::vector<std::string>> clean_path(const std::vector<std::string>& raw) {
  std::vector<std::string> path;
  path.reserve(raw.size());
  for (const auto& label : raw) {
    auto cleaned = text::collapse_whitespace(label);
    if (cleaned.empty()) return std::nullopt;
    path.push_back(std::move(cleaned));
  }
  if (path.empty()) return std::nullopt;
  return path;
}

class CatalogBuilder {
 public:
  void add(Item item) {
    if (!seen_.insert(item.id).second) {
      ++result_.skipped;
      return;
    }
    result_.records.push_back(std::move(item));
  }
  void skip() { ++result_.skipped; }

  Loaded<Item> finish() && {
    if (result_.records.empty()) throw EmptyCatalog();
    return std::move(result_);
  }

 private:
  Loaded<Item> result_;
  std::unordered_set<std::string> seen_;
};

}  // namespace

Loaded<Item> parse_mind_catalog(std::istream& in) {
  CatalogBuilder builder;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (text::trim(line).empty()) continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() < 4) {
      builder.skip();
      continue;
    }
    auto id = std::string(text::trim(cols[0]));
    auto path = clean_path({std::string(cols[1]), std::string(cols[2])});
    if (id.empty() || !path) {
      builder.skip();
      continue;
    }
    builder.add(Item{std::move(id), text::collapse_whitespace(cols[3]), std::move(*path), std::nullopt});
  }
  return std::move(builder).finish();
}

Loaded<Item> load_mind_catalog(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_mind_catalog(in);
}

Loaded<Item> parse_catalog_records(std::istream& in) {
  CatalogBuilder builder;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (text::trim(line).empty()) continue;
    const auto record = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!record.is_object()) {
      builder.skip();
      continue;
    }
    const auto id_it = record.find("id");
    auto path_it = record.find("semantic_path");
    if (path_it == record.end()) path_it = record.find("path");
    if (id_it == record.end() || !id_it->is_string() || path_it == record.end() || !path_it->is_array()) {
      builder.skip();
      continue;
    }
    std::vector<std::string> raw_path;
    bool labels_ok = true;
    for (const auto& label : *path_it) {
      if (!label.is_string()) {
        labels_ok = false;
        break;
      }
      raw_path.push_back(label.get<std::string>());
    }
    auto id = std::string(text::trim(id_it->get<std::string>()));
    auto path = labels_ok ? clean_path(raw_path) : std::nullopt;
    if (id.empty() || !path) {
      builder.skip();
      continue;
    }
    Item item{std::move(id), {}, std::move(*path), std::nullopt};
    if (auto t = record.find("title"); t != record.end() && t->is_string()) {
      item.title = text::collapse_whitespace(t->get<std::string>());
    }
    if (auto d = record.find("description"); d != record.end() && d->is_string()) {
      item.description = text::collapse_whitespace(d->get<std::string>());
    }
    builder.add(std::move(item));
  }
  return std::move(builder).finish();
}

Loaded<Item> load_catalog_records(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_catalog_records(in);
}

Loaded<Interaction> parse_behaviors(std::istream& in) {
  Loaded<Interaction> out;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (text::trim(line).empty()) continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() < 4 || text::trim(cols[1]).empty()) {
      ++out.skipped;
      continue;
    }
    Interaction row;
    row.user_id = std::string(text::trim(cols[1]));
    for (auto id : text::whitespace_units(cols[3])) row.history.emplace_back(id);

    bool malformed = false;
    if (cols.size() >= 5) {
      for (auto token : text::whitespace_units(cols[4])) {
        const auto dash = token.rfind('-');
        if (dash == std::string_view::npos || dash == 0 || dash + 2 != token.size() ||
            (token[dash + 1] != '0' && token[dash + 1] != '1')) {
          malformed = true;
          break;
        }
        std::string id(token.substr(0, dash));
        const bool clicked = token[dash + 1] == '1';
        if (std::find(row.candidates.begin(), row.candidates.end(), id) != row.candidates.end()) continue;
        if (clicked) row.positives.push_back(id);
        row.candidates.push_back(std::move(id));
      }
    }
    if (malformed || (row.history.empty() && row.candidates.empty())) {
      ++out.skipped;
      continue;
    }
    out.records.push_back(std::move(row));
  }
  return out;
}

Loaded<Interaction> load_behaviors(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_behaviors(in);
}

Interaction truncate_history(Interaction interaction, std::size_t max) {
  if (max == 0) throw std::invalid_argument("truncate_history: max must be >= 1");
  auto& h = interaction.history;
  if (h.size() > max) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(max));
  return interaction;
}

Catalog::Catalog(std::vector<Item> items) : items_(std::move(items)) {
  by_id_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!by_id_.emplace(items_[i].id, i).second) throw DataError("duplicate item id: " + items_[i].id);
  }
}

const Item* Catalog::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

const Item& Catalog::at(std::string_view id) const {
  if (const auto* item = find(id)) return *item;
  throw DataError("unknown item id: " + std::string(id));
}

ResolveStats resolve_against(const Catalog& catalog, std::vector<Interaction>& interactions) {
  ResolveStats stats;
  auto keep_known = [&](std::vector<std::string>& ids, std::size_t& dropped) {
    const auto before = ids.size();
    std::erase_if(ids, [&](const std::string& id) { return !catalog.contains(id); });
    dropped += before - ids.size();
  };
  for (auto& row : interactions) {
    keep_known(row.history, stats.dropped_history);
    keep_known(row.positives, stats.dropped_positives);
    keep_known(row.candidates, stats.dropped_candidates);
  }
  return stats;
}

}  // namespace treerec
