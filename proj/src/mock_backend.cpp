#include "treerec/mock_backend.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "treerec/corpus.hpp"
#include "treerec/error.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

// Strips the " (n)" suffix display_labels() adds to repeated titles.
std::string_view base_title(std::string_view label) {
  if (label.size() < 4 || label.back() != ')') return label;
  const auto open = label.rfind(" (");
  if (open == std::string_view::npos) return label;
  const auto digits = label.substr(open + 2, label.size() - open - 3);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return label;
  }
  return label.substr(0, open);
}

// Token -> weight. Candidates score the sum of weights of their distinct tokens.
using Context = std::map<std::string, std::size_t>;

void add_tokens(Context& into, std::string_view s, std::size_t weight) {
  for (auto& t : text::lexical_tokens(s)) into[std::move(t)] += weight;
}

std::size_t score(const std::vector<std::string>& tokens, const Context& context) {
  std::size_t sum = 0;
  for (const auto& t : tokens) {
    if (const auto it = context.find(t); it != context.end()) sum += it->second;
  }
  return sum;
}

}  // namespace

std::string format_ranked_reply(const std::vector<std::string>& entries) {
  std::string out = "{";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(i + 1) + ". " + entries[i];
  }
  out += "}";
  return out;
}

MockBackend::MockBackend(TemplateSet templates, Knowledge knowledge)
    : templates_(std::move(templates)), knowledge_(std::move(knowledge)) {}

MockBackend MockBackend::from_catalog(const Catalog& catalog, TemplateSet templates) {
  Knowledge knowledge;
  knowledge.reserve(catalog.size());
  for (const auto& item : catalog.items()) knowledge.emplace(item.title, item.semantic_path);
  return MockBackend(std::move(templates), std::move(knowledge));
}

std::optional<Stage> MockBackend::classify(std::string_view prompt) const {
  std::optional<Stage> best;
  std::size_t best_len = 0;
  for (auto s : kAllStages) {
    const auto marker = templates_.marker(s);
    if (marker.empty() || marker.size() <= best_len) continue;
    if (prompt.substr(0, marker.size()) == marker) {
      best = s;
      best_len = marker.size();
    }
  }
  return best;
}

std::string MockBackend::mock_reply(const ChatSession& session, std::string_view prompt) const {
  const auto stage = classify(prompt);
  if (!stage) throw MockProtocolError("mock backend cannot identify the stage of prompt: " +
                                      std::string(prompt.substr(0, 80)));
  if (*stage == Stage::profile) return profile_reply(prompt);
  return rank_reply(session, *stage, prompt);
}

std::string MockBackend::profile_reply(std::string_view prompt) const {
  const auto blocks = extract_list_blocks(prompt);
  if (blocks.empty()) throw MockProtocolError("profile prompt without a history list");

  std::map<std::string, std::size_t> freq;
  for (const auto& title : blocks.front()) {
    auto it = knowledge_.find(title);
    if (it == knowledge_.end()) it = knowledge_.find(std::string(base_title(title)));
    if (it == knowledge_.end()) continue;
    const std::set<std::string> labels(it->second.begin(), it->second.end());
    for (const auto& label : labels) ++freq[label];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> labels;
  labels.reserve(ranked.size());
  for (auto& [label, count] : ranked) labels.push_back(label);
  return format_ranked_reply(labels);
}

std::string MockBackend::rank_reply(const ChatSession& session, Stage stage, std::string_view prompt) const {
  const auto blocks = extract_list_blocks(prompt);
  if (blocks.empty()) throw MockProtocolError("ranking prompt without a candidate list");
  const auto& candidates = blocks.back();

  std::size_t wanted = candidates.size();
  if (const auto anchor = templates_.count_anchor(stage); !anchor.empty()) {
    const auto at = prompt.find(anchor);
    if (at == std::string_view::npos) throw MockProtocolError("ranking prompt without a requested count");
    std::size_t pos = at + anchor.size();
    std::size_t value = 0;
    const auto start = pos;
    while (pos < prompt.size() && pos - start < 9 && prompt[pos] >= '0' && prompt[pos] <= '9') {
      value = value * 10 + static_cast<std::size_t>(prompt[pos] - '0');
      ++pos;
    }
    if (pos == start) throw MockProtocolError("ranking prompt count is not a number");
    wanted = std::min(wanted, value);
  }

  Context context;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    for (const auto& line : blocks[b]) add_tokens(context, line, 1);
  }
  const auto turns = session.turns();
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].role != Role::user || classify(turns[i].text) != Stage::profile) continue;
    const auto history = extract_list_blocks(turns[i].text);
    if (!history.empty()) {
      for (const auto& title : history.front()) add_tokens(context, title, 1);
    }
    if (i + 1 < turns.size() && turns[i + 1].role == Role::assistant) {
      // Summary entries outrank any amount of history overlap, earlier entries more so.
      std::size_t floor = 1;
      for (const auto& [token, weight] : context) floor += weight;
      const auto& summary = turns[i + 1].text;
      const auto entries = extract_numbered_entries(summary);
      if (entries.empty()) {
        add_tokens(context, summary, floor);
      } else {
        for (std::size_t r = 0; r < entries.size(); ++r) add_tokens(context, entries[r], (entries.size() - r) * floor);
      }
    }
    break;
  }

  std::vector<std::pair<std::size_t, const std::string*>> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) scored.emplace_back(score(text::lexical_tokens(c), context), &c);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<std::string> top;
  for (std::size_t i = 0; i < wanted; ++i) top.push_back(*scored[i].second);
  return format_ranked_reply(top);
}

}  // namespace treerec
