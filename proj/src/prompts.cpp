#include "treerec/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "treerec/error.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

namespace ph = placeholder;

constexpr std::array<std::string_view, 9> kKnownPlaceholders{
    ph::kHistoryList, ph::kCandidateList, ph::kCount,       ph::kCategoryName, ph::kSubcategoryList,
    ph::kSemanticInfo, ph::kTopic,        ph::kPerspective, ph::kInterest};

struct StageRules {
  std::vector<std::string_view> allowed;
  std::vector<std::string_view> required;
};

StageRules rules_for(Stage s) {
  switch (s) {
    case Stage::profile:
      return {{ph::kHistoryList, ph::kPerspective}, {ph::kHistoryList}};
    case Stage::tree_search:
      return {{ph::kCount, ph::kCategoryName, ph::kPerspective, ph::kSubcategoryList, ph::kInterest},
              {ph::kSubcategoryList}};
    case Stage::leaf_recall:
      return {{ph::kCount, ph::kSemanticInfo, ph::kPerspective, ph::kTopic, ph::kCandidateList, ph::kInterest},
              {ph::kCandidateList}};
    case Stage::rerank:
      return {{ph::kCandidateList, ph::kInterest}, {ph::kCandidateList}};
    case Stage::flat_rank:
      return {{ph::kCount, ph::kPerspective, ph::kHistoryList, ph::kCandidateList},
              {ph::kHistoryList, ph::kCandidateList}};
  }
  return {};
}

// Finds the known placeholder starting at text[pos], if any.
std::optional<std::string_view> placeholder_at(std::string_view text, std::size_t pos) {
  for (auto p : kKnownPlaceholders) {
    if (text.substr(pos, p.size()) == p) return p;
  }
  return std::nullopt;
}

// Any "<Word ...>" shaped token that is not a known placeholder.
std::optional<std::string> unknown_placeholder(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<' || placeholder_at(text, i)) continue;
    std::size_t j = i + 1;
    while (j < text.size() && j - i < 40 && (std::isalpha(static_cast<unsigned char>(text[j])) || text[j] == ' ')) ++j;
    if (j < text.size() && text[j] == '>' && j > i + 1) return std::string(text.substr(i, j - i + 1));
  }
  return std::nullopt;
}

using Bindings = std::vector<std::pair<std::string_view, std::string>>;

std::string substitute(const StageTemplate& tpl, const Bindings& values) {
  std::string_view text = tpl.text;
  std::string out;
  out.reserve(text.size() + 256);
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '<') {
      if (auto p = placeholder_at(text, i)) {
        const auto it = std::find_if(values.begin(), values.end(), [&](const auto& b) { return b.first == *p; });
        if (it == values.end()) {
          throw ConfigError("template for stage " + std::string(to_string(tpl.stage)) + " uses " + std::string(*p) +
                            " which this stage cannot fill");
        }
        out += it->second;
        i += p->size();
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

const std::string& clause(const StageTemplate& tpl, Perspective p) {
  return tpl.perspective_clause[static_cast<std::size_t>(p)];
}

std::string sanitize_entry(std::string_view entry) {
  std::string out(entry);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

// "12: rest" -> (12, offset of rest); requires the ": " separator.
std::optional<std::pair<std::size_t, std::size_t>> numbered_line(std::string_view line) {
  std::size_t i = 0;
  std::size_t value = 0;
  while (i < line.size() && i < 6 && std::isdigit(static_cast<unsigned char>(line[i]))) {
    value = value * 10 + static_cast<std::size_t>(line[i] - '0');
    ++i;
  }
  if (i == 0 || line.substr(i, 2) != ": ") return std::nullopt;
  return std::pair{value, i + 2};
}

bool is_blank(char c) { return c == ' ' || c == '\t'; }

std::string clean_entry(std::string_view raw) {
  auto s = text::trim(raw);
  while (!s.empty()) {
    const char c = s.back();
    if (c == '}' || c == ']' || c == ',' || c == ';') {
      s.remove_suffix(1);
      s = text::trim(s);
    } else {
      break;
    }
  }
  return std::string(s);
}

std::vector<std::string> jaccard_tokens(std::string_view s) {
  const auto normalized = text::normalize_label(s);
  std::vector<std::string> out;
  for (auto unit : text::whitespace_units(normalized)) out.emplace_back(unit);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t intersection_size(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

StageTemplate make(Stage s, std::string text, std::array<std::string, 4> clauses = {}) {
  return StageTemplate{s, std::move(text), std::move(clauses)};
}

}  // namespace

std::string_view to_string(Perspective p) noexcept {
  switch (p) {
    case Perspective::interest: return "interest";
    case Perspective::relevance: return "relevance";
    case Perspective::action: return "action";
    case Perspective::recommendation: return "recommendation";
  }
  return "?";
}

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::profile: return "profile";
    case Stage::tree_search: return "tree_search";
    case Stage::leaf_recall: return "leaf_recall";
    case Stage::rerank: return "rerank";
    case Stage::flat_rank: return "flat_rank";
  }
  return "?";
}

Perspective parse_perspective(std::string_view name) {
  for (auto p : kAllPerspectives) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown perspective '" + std::string(name) +
                    "' (expected interest, relevance, action or recommendation)");
}

Stage parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

TemplateSet TemplateSet::defaults() {
  const std::array<std::string, 4> ranking_clauses{
      "the user's interest", "the relevance related to the user",
      "the probability that the user is likely to click", "the degree of recommendation to the user"};

  TemplateSet set;
  set.templates_[static_cast<std::size_t>(Stage::profile)] = make(
      Stage::profile,
      "A user's click items are: <Item List>. <Perspective>, from the most important to the least important.",
      {"Summarize the interested items topic categories", "Summarize the news topic categories related to users",
       "Summarize the news topic that the user are likely to click on",
       "Summarize the news topic worth recommending to the user"});
  set.templates_[static_cast<std::size_t>(Stage::tree_search)] = make(
      Stage::tree_search,
      "Rank the top <k> subcategories about <Category Name> based on <Perspective> from the following candidates "
      "without any explanation. The output template is: {1. Subcategory1, 2. Subcategory2, ...} Here is the "
      "provided list: <Subcategory List>.",
      ranking_clauses);
  set.templates_[static_cast<std::size_t>(Stage::leaf_recall)] = make(
      Stage::leaf_recall,
      "Rank the top <k> items about <Semantic Information> based on <Perspective> from the candidates about <Topic> "
      "without any explanation. The output template is: {1. Item1, 2. Item2, ...} Here is the provided list: "
      "<Item list>.",
      ranking_clauses);
  set.templates_[static_cast<std::size_t>(Stage::rerank)] = make(
      Stage::rerank,
      "Rank these pre-selected news based on user interests. Be aware of ranking diversity.<Item list>");
  set.templates_[static_cast<std::size_t>(Stage::flat_rank)] = make(
      Stage::flat_rank,
      "Rank the top <k> items based on <Perspective> from the candidates without any explanation. A user's click "
      "items are: <Item List>. The output template is: {1. Item1, 2. Item2, ...} Here is the provided list: "
      "<Item list>.",
      ranking_clauses);
  set.validate();
  return set;
}

void TemplateSet::validate() const {
  for (auto s : kAllStages) {
    const auto& tpl = get(s);
    const auto rules = rules_for(s);
    if (auto bad = unknown_placeholder(tpl.text)) {
      throw ConfigError("template for stage " + std::string(to_string(s)) + " has unknown placeholder " + *bad);
    }
    for (auto p : kKnownPlaceholders) {
      const bool used = tpl.text.find(p) != std::string::npos;
      const bool allowed = std::find(rules.allowed.begin(), rules.allowed.end(), p) != rules.allowed.end();
      const bool required = std::find(rules.required.begin(), rules.required.end(), p) != rules.required.end();
      if (used && !allowed) {
        throw ConfigError("placeholder " + std::string(p) + " is not available in stage " + std::string(to_string(s)));
      }
      if (required && !used) {
        throw ConfigError("template for stage " + std::string(to_string(s)) + " must contain " + std::string(p));
      }
    }
    if (tpl.text.find(ph::kPerspective) != std::string::npos) {
      for (auto p : kAllPerspectives) {
        if (text::trim(clause(tpl, p)).empty()) {
          throw ConfigError("stage " + std::string(to_string(s)) + " lacks a clause for perspective " +
                            std::string(to_string(p)));
        }
      }
    }
  }
}

TemplateSet TemplateSet::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("template document must be an object");
  auto set = defaults();
  try {
    for (const auto& [name, body] : doc.items()) {
      const auto stage = parse_stage(name);
      auto& tpl = set.templates_[static_cast<std::size_t>(stage)];
      if (body.contains("text")) tpl.text = body.at("text").get<std::string>();
      if (body.contains("perspectives")) {
        for (const auto& [pname, clause_text] : body.at("perspectives").items()) {
          tpl.perspective_clause[static_cast<std::size_t>(parse_perspective(pname))] = clause_text.get<std::string>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed template document: ") + e.what());
  }
  set.validate();
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open template file " + path.string());
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("template file is not valid JSON: " + path.string());
  return from_json(doc);
}

nlohmann::json TemplateSet::to_json() const {
  nlohmann::json doc;
  for (auto s : kAllStages) {
    const auto& tpl = get(s);
    auto& body = doc[std::string(to_string(s))];
    body["text"] = tpl.text;
    if (tpl.text.find(ph::kPerspective) != std::string::npos) {
      for (auto p : kAllPerspectives) body["perspectives"][std::string(to_string(p))] = clause(tpl, p);
    }
  }
  return doc;
}

std::string_view TemplateSet::marker(Stage s) const {
  std::string_view text = get(s).text;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '<' && placeholder_at(text, i)) return text.substr(0, i);
  }
  return text;
}

std::string_view TemplateSet::count_anchor(Stage s) const {
  std::string_view text = get(s).text;
  const auto k = text.find(ph::kCount);
  if (k == std::string_view::npos) return {};
  std::size_t begin = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (text[i] != '<') continue;
    if (auto p = placeholder_at(text, i)) {
      begin = i + p->size();
      i = begin - 1;
    }
  }
  return text.substr(begin, k - begin);
}

std::string render_list_block(std::span<const std::string> entries) {
  std::string out = "\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out += std::to_string(i + 1);
    out += ": ";
    out += sanitize_entry(entries[i]);
    out += '\n';
  }
  return out;
}

std::vector<std::vector<std::string>> extract_list_blocks(std::string_view text) {
  std::vector<std::vector<std::string>> blocks;
  bool open = false;
  for (auto line : text::split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto numbered = numbered_line(line);
    if (numbered && numbered->first == 1) {
      blocks.emplace_back();
      blocks.back().emplace_back(line.substr(numbered->second));
      open = true;
    } else if (numbered && open && numbered->first == blocks.back().size() + 1) {
      blocks.back().emplace_back(line.substr(numbered->second));
    } else {
      open = false;
    }
  }
  return blocks;
}

std::string render_profile_prompt(const TemplateSet& templates, std::span<const std::string> history_titles,
                                  Perspective perspective) {
  if (history_titles.empty()) throw EmptyHistory();
  const auto& tpl = templates.get(Stage::profile);
  return substitute(tpl, {{ph::kHistoryList, render_list_block(history_titles)},
                          {ph::kPerspective, clause(tpl, perspective)}});
}

std::string render_tree_search_prompt(const TemplateSet& templates, std::string_view category_name,
                                      std::span<const std::string> child_labels, std::size_t m,
                                      Perspective perspective, std::string_view interest) {
  if (child_labels.empty()) throw std::invalid_argument("tree search needs at least one child");
  if (m == 0) throw std::invalid_argument("tree search count must be >= 1");
  const auto& tpl = templates.get(Stage::tree_search);
  return substitute(tpl, {{ph::kCount, std::to_string(std::min(m, child_labels.size()))},
                          {ph::kCategoryName, std::string(category_name)},
                          {ph::kPerspective, clause(tpl, perspective)},
                          {ph::kSubcategoryList, render_list_block(child_labels)},
                          {ph::kInterest, std::string(interest)}});
}

std::string render_leaf_recall_prompt(const TemplateSet& templates, std::span<const std::string> item_labels,
                                      std::size_t k, std::span<const std::string> topic_labels,
                                      Perspective perspective, std::string_view interest) {
  if (item_labels.empty()) throw std::invalid_argument("leaf recall needs a non-empty subset");
  if (k == 0) throw std::invalid_argument("leaf recall count must be >= 1");
  const auto& tpl = templates.get(Stage::leaf_recall);
  const std::vector<std::string> topic(topic_labels.begin(), topic_labels.end());
  return substitute(tpl, {{ph::kCount, std::to_string(std::min(k, item_labels.size()))},
                          {ph::kSemanticInfo, topic.empty() ? std::string() : topic.back()},
                          {ph::kTopic, text::join(topic, " > ")},
                          {ph::kPerspective, clause(tpl, perspective)},
                          {ph::kCandidateList, render_list_block(item_labels)},
                          {ph::kInterest, std::string(interest)}});
}

std::string render_rerank_prompt(const TemplateSet& templates, std::span<const std::string> pool_labels,
                                 std::string_view interest) {
  if (pool_labels.empty()) throw std::invalid_argument("re-rank needs a non-empty pool");
  return substitute(templates.get(Stage::rerank),
                    {{ph::kCandidateList, render_list_block(pool_labels)}, {ph::kInterest, std::string(interest)}});
}

std::string render_flat_rank_prompt(const TemplateSet& templates, std::span<const std::string> history_titles,
                                    std::span<const std::string> candidate_labels, std::size_t count,
                                    Perspective perspective) {
  if (history_titles.empty()) throw EmptyHistory();
  if (candidate_labels.empty()) throw std::invalid_argument("flat ranking needs candidates");
  const auto& tpl = templates.get(Stage::flat_rank);
  return substitute(tpl, {{ph::kCount, std::to_string(std::min(count, candidate_labels.size()))},
                          {ph::kPerspective, clause(tpl, perspective)},
                          {ph::kHistoryList, render_list_block(history_titles)},
                          {ph::kCandidateList, render_list_block(candidate_labels)}});
}

std::vector<std::string> display_labels(std::span<const std::string> titles) {
  std::vector<std::string> out;
  out.reserve(titles.size());
  std::unordered_set<std::string> used;
  for (const auto& raw : titles) {
    auto base = sanitize_entry(raw);
    auto label = base;
    for (int n = 2; !used.insert(label).second; ++n) label = base + " (" + std::to_string(n) + ")";
    out.push_back(std::move(label));
  }
  return out;
}

std::vector<std::string> extract_numbered_entries(std::string_view reply) {
  struct Marker {
    std::size_t begin;    // first digit
    std::size_t content;  // first byte after the separator
  };
  std::vector<Marker> markers;
  std::size_t last_number = 0;

  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    if (i > 0 && std::isdigit(static_cast<unsigned char>(reply[i - 1]))) continue;
    std::size_t j = i;
    std::size_t number = 0;
    while (j < reply.size() && j - i < 4 && std::isdigit(static_cast<unsigned char>(reply[j]))) {
      number = number * 10 + static_cast<std::size_t>(reply[j] - '0');
      ++j;
    }
    if (j >= reply.size() || (reply[j] != '.' && reply[j] != ':' && reply[j] != ')')) continue;
    if (j + 1 < reply.size() && !is_blank(reply[j + 1])) continue;

    std::size_t b = i;
    while (b > 0 && is_blank(reply[b - 1])) --b;
    const char before = b == 0 ? '\n' : reply[b - 1];
    const bool line_start = before == '\n' || before == '\r' || before == '{' || before == '[';
    const bool continues_list = before == ',' && !markers.empty() && number == last_number + 1;
    if (!line_start && !continues_list) continue;

    markers.push_back({i, std::min(j + 1, reply.size())});
    last_number = number;
    i = j;
  }

  std::vector<std::string> entries;
  for (std::size_t m = 0; m < markers.size(); ++m) {
    auto end = m + 1 < markers.size() ? markers[m + 1].begin : reply.size();
    end = std::min(end, reply.find('\n', markers[m].content));
    auto entry = clean_entry(reply.substr(markers[m].content, end - markers[m].content));
    if (!entry.empty()) entries.push_back(std::move(entry));
  }
  return entries;
}

LabelMatcher::LabelMatcher(std::vector<std::string> vocabulary) : vocab_(std::move(vocabulary)) {
  if (vocab_.empty()) throw std::invalid_argument("LabelMatcher needs a non-empty vocabulary");
  token_sets_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    const auto trimmed = std::string(text::trim(vocab_[i]));
    exact_.emplace(trimmed, i);
    folded_.emplace(text::ascii_lower(trimmed), i);
    normalized_.emplace(text::normalize_label(trimmed), i);
    token_sets_.push_back(jaccard_tokens(trimmed));
  }
}

std::optional<std::size_t> LabelMatcher::match(std::string_view entry) const {
  const auto trimmed = std::string(text::trim(entry));
  if (trimmed.empty()) return std::nullopt;
  if (auto it = exact_.find(trimmed); it != exact_.end()) return it->second;
  if (auto it = folded_.find(text::ascii_lower(trimmed)); it != folded_.end()) return it->second;
  const auto normalized = text::normalize_label(trimmed);
  if (normalized.empty()) return std::nullopt;
  if (auto it = normalized_.find(normalized); it != normalized_.end()) return it->second;

  const auto tokens = jaccard_tokens(trimmed);
  std::optional<std::size_t> best;
  std::size_t best_inter = 0;
  std::size_t best_union = 1;
  for (std::size_t i = 0; i < token_sets_.size(); ++i) {
    const auto inter = intersection_size(tokens, token_sets_[i]);
    if (inter == 0) continue;
    const auto uni = tokens.size() + token_sets_[i].size() - inter;
    // inter/uni >= 0.8, compared exactly in integers.
    if (inter * 5 < uni * 4) continue;
    if (!best || inter * best_union > best_inter * uni) {
      best = i;
      best_inter = inter;
      best_union = uni;
    }
  }
  return best;
}

std::vector<std::size_t> parse_ranked_list(std::string_view reply, const LabelMatcher& matcher) {
  const auto entries = extract_numbered_entries(reply);
  if (entries.empty()) throw MalformedOutput("reply contains no numbered entries");
  std::vector<std::size_t> out;
  std::vector<bool> taken(matcher.vocabulary().size(), false);
  for (const auto& entry : entries) {
    const auto idx = matcher.match(entry);
    if (!idx || taken[*idx]) continue;
    taken[*idx] = true;
    out.push_back(*idx);
  }
  if (out.empty()) throw MalformedOutput("no reply entry matches the offered candidates");
  return out;
}

std::vector<std::string> parse_ranked_list(std::string_view reply, std::span<const std::string> vocabulary) {
  const LabelMatcher matcher({vocabulary.begin(), vocabulary.end()});
  std::vector<std::string> out;
  for (auto idx : parse_ranked_list(reply, matcher)) out.push_back(matcher.vocabulary()[idx]);
  return out;
}

}  // namespace treerec
