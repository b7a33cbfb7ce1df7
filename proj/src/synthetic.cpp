#include "treerec/synthetic.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "treerec/rng.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

constexpr const char* kCategoryNames[] = {
    "news",   "sports",  "finance", "lifestyle", "travel",        "health", "foodanddrink", "autos",      "weather",
    "video",  "music",   "tv",      "movies",    "entertainment", "kids",   "middleeast",   "northamerica"};
constexpr std::size_t kNamedCategories = std::size(kCategoryNames);

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};

// Distinct pronounceable word for every index below the syllable space.
std::string pseudo_word(std::size_t index, std::size_t syllables) {
  std::size_t space = 1;
  for (std::size_t i = 0; i < syllables; ++i) space *= std::size(kOnsets) * std::size(kVowels);
  // 7919 shares no factor with the space (powers of 2, 5 and 7), so this permutes it.
  index = (index * 7919 + 12345) % space;
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += kOnsets[index % std::size(kOnsets)];
    index /= std::size(kOnsets);
    w += kVowels[index % std::size(kVowels)];
    index /= std::size(kVowels);
  }
  return w;
}

std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
}

struct Leaf {
  std::string category;
  std::string subcategory;
  std::vector<std::string> vocabulary;
  std::size_t first = 0;  // index range into the item list
  std::size_t size = 0;
};

struct Layout {
  std::vector<Leaf> leaves;
  std::vector<Item> items;
};

void check(const SyntheticSpec& s) {
  if (s.categories == 0 || s.min_subcategories == 0 || s.min_leaf == 0) {
    throw std::invalid_argument("synthetic spec needs at least one category, subcategory and item");
  }
  if (s.min_subcategories > s.max_subcategories || s.min_leaf > s.max_leaf || s.min_history > s.max_history) {
    throw std::invalid_argument("synthetic spec has an inverted range");
  }
  if (s.title_lengths.empty()) throw std::invalid_argument("synthetic spec needs title lengths");
}

Layout make_layout(const SyntheticSpec& spec) {
  check(spec);
  Rng rng(derive_seed(spec.seed, 0));
  Layout layout;
  std::size_t word_counter = 0;
  for (std::size_t c = 0; c < spec.categories; ++c) {
    const std::string category = c < kNamedCategories ? kCategoryNames[c] : "category" + std::to_string(c + 1);
    const auto subs = uniform_between(rng, spec.min_subcategories, spec.max_subcategories);
    for (std::size_t s = 0; s < subs; ++s) {
      Leaf leaf;
      leaf.category = category;
      leaf.subcategory = category + "_" + pseudo_word(word_counter++, 3);
      for (int v = 0; v < 8; ++v) leaf.vocabulary.push_back(pseudo_word(word_counter++, 3));
      leaf.size = uniform_between(rng, spec.min_leaf, spec.max_leaf);
      layout.leaves.push_back(std::move(leaf));
    }
  }

  if (spec.total_items) {
    const auto n = layout.leaves.size();
    if (*spec.total_items < n * spec.min_leaf || *spec.total_items > n * spec.max_leaf) {
      throw std::invalid_argument("total_items is out of reach for the leaf size range");
    }
    std::size_t total = 0;
    for (const auto& l : layout.leaves) total += l.size;
    while (total != *spec.total_items) {
      auto& leaf = layout.leaves[uniform_index(rng, n)];
      if (total < *spec.total_items && leaf.size < spec.max_leaf) {
        ++leaf.size;
        ++total;
      } else if (total > *spec.total_items && leaf.size > spec.min_leaf) {
        --leaf.size;
        --total;
      }
    }
  }

  std::vector<std::string> filler;
  for (std::size_t i = 0; i < 300; ++i) filler.push_back(pseudo_word(word_counter++, 2));

  std::size_t next_id = 1;
  for (auto& leaf : layout.leaves) {
    leaf.first = layout.items.size();
    for (std::size_t i = 0; i < leaf.size; ++i) {
      const auto length = spec.title_lengths[(next_id - 1) % spec.title_lengths.size()];
      const auto topical = std::min(spec.topic_words_per_title, length);
      std::vector<std::string> words;
      for (auto idx : sample_indices(rng, leaf.vocabulary.size(), topical)) words.push_back(leaf.vocabulary[idx]);
      while (words.size() < length) words.push_back(filler[uniform_index(rng, filler.size())]);
      // Interleave so topic words are not always leading.
      for (std::size_t j = words.size(); j > 1; --j) std::swap(words[j - 1], words[uniform_index(rng, j)]);
      if (!words.empty()) words.front()[0] = static_cast<char>(words.front()[0] - 'a' + 'A');
      layout.items.push_back({"N" + std::to_string(next_id++), text::join(words, " "),
                              {leaf.category, leaf.subcategory}, std::nullopt});
    }
  }
  return layout;
}

}  // namespace

std::vector<Item> make_synthetic_catalog(const SyntheticSpec& spec) { return make_layout(spec).items; }

SyntheticWorld make_synthetic_world(const SyntheticSpec& spec) {
  auto layout = make_layout(spec);
  SyntheticWorld world;
  const auto& items = layout.items;
  const auto& leaves = layout.leaves;
  Rng rng(derive_seed(spec.seed, 1));

  const auto pick_from = [&](const Leaf& leaf) { return items[leaf.first + uniform_index(rng, leaf.size)].id; };

  for (std::size_t u = 0; u < spec.users; ++u) {
    Interaction row;
    row.user_id = "U" + std::to_string(u + 1);
    const auto favs = sample_indices(rng, leaves.size(), std::min(spec.favourites, leaves.size()));
    const auto length = std::min(uniform_between(rng, spec.min_history, spec.max_history), items.size());
    std::unordered_set<std::string> used;
    // Bounded attempts keep tiny catalogs from looping forever.
    for (std::size_t attempt = 0; row.history.size() < length && attempt < length * 20; ++attempt) {
      const bool focused = !favs.empty() && uniform_index(rng, 100) < spec.focus_percent;
      auto id = focused ? pick_from(leaves[favs[uniform_index(rng, favs.size())]])
                        : items[uniform_index(rng, items.size())].id;
      if (used.insert(id).second) row.history.push_back(std::move(id));
    }
    for (std::size_t attempt = 0; row.positives.size() < spec.positives && attempt < spec.positives * 20; ++attempt) {
      auto id = pick_from(leaves[favs[uniform_index(rng, favs.size())]]);
      if (used.insert(id).second) row.positives.push_back(std::move(id));
    }
    std::vector<std::string> shown = row.positives;
    for (std::size_t attempt = 0; shown.size() < spec.impressions && attempt < spec.impressions * 20; ++attempt) {
      auto id = items[uniform_index(rng, items.size())].id;
      if (used.insert(id).second) shown.push_back(std::move(id));
    }
    for (auto idx : sample_indices(rng, shown.size(), shown.size())) row.candidates.push_back(shown[idx]);
    // Positives in impression order, as a behaviors file lists them.
    const std::unordered_set<std::string> positive(row.positives.begin(), row.positives.end());
    row.positives.clear();
    for (const auto& id : row.candidates) {
      if (positive.count(id)) row.positives.push_back(id);
    }
    world.interactions.push_back(std::move(row));
  }
  world.items = std::move(layout.items);
  return world;
}

void write_mind_news(std::ostream& out, std::span<const Item> items) {
  for (const auto& item : items) {
    const auto& p = item.semantic_path;
    out << item.id << '\t' << (p.size() > 0 ? p[0] : "") << '\t' << (p.size() > 1 ? p[1] : "") << '\t' << item.title
        << '\t' << item.description.value_or("") << '\t' << "" << '\t' << "[]" << '\t' << "[]" << '\n';
  }
}

void write_mind_behaviors(std::ostream& out, std::span<const Interaction> interactions) {
  std::size_t impression = 1;
  for (const auto& row : interactions) {
    const std::unordered_set<std::string> clicked(row.positives.begin(), row.positives.end());
    out << impression++ << '\t' << row.user_id << '\t' << "11/11/2019 9:00:00 AM" << '\t'
        << text::join(row.history, " ") << '\t';
    for (std::size_t i = 0; i < row.candidates.size(); ++i) {
      out << (i ? " " : "") << row.candidates[i] << (clicked.count(row.candidates[i]) ? "-1" : "-0");
    }
    out << '\n';
  }
}

}  // namespace treerec
