#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "treerec/corpus.hpp"

namespace treerec {

// Parameters of a generated two-level news world. Every subcategory owns a
// small topic vocabulary; titles mix topic words with shared filler words.
struct SyntheticSpec {
  std::uint64_t seed = 7;
  std::size_t categories = 6;
  std::size_t min_subcategories = 2;
  std::size_t max_subcategories = 5;
  std::size_t min_leaf = 10;  // items per subcategory
  std::size_t max_leaf = 50;
  std::optional<std::size_t> total_items;  // adjust leaf sizes to hit this exactly
  std::vector<std::size_t> title_lengths = {12, 13, 14, 15, 16};  // cycled per item
  std::size_t topic_words_per_title = 4;

  std::size_t users = 100;
  std::size_t min_history = 5;
  std::size_t max_history = 50;
  std::size_t impressions = 20;
  std::size_t positives = 2;
  std::size_t favourites = 2;       // subcategories a user mostly reads
  std::size_t focus_percent = 80;   // share of clicks drawn from favourites
};

struct SyntheticWorld {
  std::vector<Item> items;
  std::vector<Interaction> interactions;
};

std::vector<Item> make_synthetic_catalog(const SyntheticSpec& spec);
SyntheticWorld make_synthetic_world(const SyntheticSpec& spec);

// MIND-format writers; the output parses back with load_mind_catalog / load_behaviors.
void write_mind_news(std::ostream& out, std::span<const Item> items);
void write_mind_behaviors(std::ostream& out, std::span<const Interaction> interactions);

}  // namespace treerec
