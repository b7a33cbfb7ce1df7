#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace treerec {

enum class Perspective { interest, relevance, action, recommendation };
inline constexpr std::array kAllPerspectives{Perspective::interest, Perspective::relevance,
                                             Perspective::action, Perspective::recommendation};

// Chain stages plus the flat single-prompt ranker used as a baseline.
enum class Stage { profile, tree_search, leaf_recall, rerank, flat_rank };
inline constexpr std::array kChainStages{Stage::profile, Stage::tree_search, Stage::leaf_recall, Stage::rerank};
inline constexpr std::array kAllStages{Stage::profile, Stage::tree_search, Stage::leaf_recall, Stage::rerank,
                                       Stage::flat_rank};

std::string_view to_string(Perspective p) noexcept;
std::string_view to_string(Stage s) noexcept;
Perspective parse_perspective(std::string_view name);  // throws ConfigError
Stage parse_stage(std::string_view name);              // throws ConfigError

// Placeholders recognised inside template text.
namespace placeholder {
inline constexpr std::string_view kHistoryList = "<Item List>";
inline constexpr std::string_view kCandidateList = "<Item list>";
inline constexpr std::string_view kCount = "<k>";
inline constexpr std::string_view kCategoryName = "<Category Name>";
inline constexpr std::string_view kSubcategoryList = "<Subcategory List>";
inline constexpr std::string_view kSemanticInfo = "<Semantic Information>";
inline constexpr std::string_view kTopic = "<Topic>";
inline constexpr std::string_view kPerspective = "<Perspective>";
inline constexpr std::string_view kInterest = "<Interest>";
}  // namespace placeholder

struct StageTemplate {
  Stage stage = Stage::profile;
  std::string text;
  // Indexed by Perspective; only needed when text contains <Perspective>.
  std::array<std::string, 4> perspective_clause;
};

class TemplateSet {
 public:
  // The four-perspective template set used by default.
  static TemplateSet defaults();
  // Stages missing from the document keep their defaults.
  static TemplateSet from_json(const nlohmann::json& doc);  // throws ConfigError
  static TemplateSet load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const StageTemplate& get(Stage s) const { return templates_[static_cast<std::size_t>(s)]; }

  // Literal text before the first placeholder of a stage's template.
  std::string_view marker(Stage s) const;
  // Literal text immediately before <k>, empty when the template has no count.
  std::string_view count_anchor(Stage s) const;

 private:
  void validate() const;
  std::array<StageTemplate, kAllStages.size()> templates_;
};

// Candidate lists are rendered one entry per line as "i: entry", the same
// shape as the re-rank transcripts. Newlines inside entries become spaces.
std::string render_list_block(std::span<const std::string> entries);
// Every maximal run of lines numbered 1, 2, 3, ... in order of appearance.
std::vector<std::vector<std::string>> extract_list_blocks(std::string_view text);

std::string render_profile_prompt(const TemplateSet& templates, std::span<const std::string> history_titles,
                                  Perspective perspective);
std::string render_tree_search_prompt(const TemplateSet& templates, std::string_view category_name,
                                      std::span<const std::string> child_labels, std::size_t m,
                                      Perspective perspective, std::string_view interest = {});
std::string render_leaf_recall_prompt(const TemplateSet& templates, std::span<const std::string> item_labels,
                                      std::size_t k, std::span<const std::string> topic_labels,
                                      Perspective perspective, std::string_view interest = {});
std::string render_rerank_prompt(const TemplateSet& templates, std::span<const std::string> pool_labels,
                                 std::string_view interest = {});
std::string render_flat_rank_prompt(const TemplateSet& templates, std::span<const std::string> history_titles,
                                    std::span<const std::string> candidate_labels, std::size_t count,
                                    Perspective perspective);

// Makes titles unique for presentation: repeated titles get " (2)", " (3)", ...
std::vector<std::string> display_labels(std::span<const std::string> titles);

// Raw text of each numbered entry ("1. X", "1: X", "1) X"), in reply order.
// Tolerates prose around the list and the "{1. X, 2. Y}" single-line form.
std::vector<std::string> extract_numbered_entries(std::string_view reply);

// Maps free-text entries back onto a fixed vocabulary: exact match, then
// case-insensitive, then punctuation-insensitive, then best token-set
// Jaccard >= 0.8 (earliest label wins ties).
class LabelMatcher {
 public:
  static constexpr double kJaccardThreshold = 0.8;

  explicit LabelMatcher(std::vector<std::string> vocabulary);

  std::optional<std::size_t> match(std::string_view entry) const;
  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> exact_;
  std::unordered_map<std::string, std::size_t> folded_;
  std::unordered_map<std::string, std::size_t> normalized_;
  std::vector<std::vector<std::string>> token_sets_;
};

// Vocabulary indices in reply order, duplicates and unmatched entries
// removed. Throws MalformedOutput when nothing usable remains.
std::vector<std::size_t> parse_ranked_list(std::string_view reply, const LabelMatcher& matcher);
std::vector<std::string> parse_ranked_list(std::string_view reply, std::span<const std::string> vocabulary);

}  // namespace treerec
