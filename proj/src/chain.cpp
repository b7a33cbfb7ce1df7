#include "treerec/chain.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>
#include <utility>

#include "treerec/text.hpp"

namespace treerec {
namespace {

constexpr std::string_view kRootCategoryName = "all categories";

nlohmann::json stage_to_json(const StageRecord& r) {
  return {{"stage", to_string(r.stage)},   {"node", r.node},
          {"prompt", r.prompt},            {"reply", r.reply},
          {"parsed", r.parsed},            {"input_tokens", r.input_tokens},
          {"output_tokens", r.output_tokens}, {"malformed", r.malformed}};
}

}  // namespace

std::vector<std::string> ChainConfig::validate() const {
  if (n == 0) throw ConfigError("chain n must be >= 1");
  if (k == 0) throw ConfigError("chain k must be >= 1");
  if (m == 0) throw ConfigError("chain m must be >= 1");
  std::vector<std::string> warnings;
  if (k > n) warnings.push_back("k (" + std::to_string(k) + ") exceeds n (" + std::to_string(n) + ")");
  return warnings;
}

nlohmann::json ChainConfig::to_json() const {
  return {{"n", n}, {"k", k}, {"m", m}, {"perspective", to_string(perspective)}, {"rerank", rerank},
          {"exclude_history", exclude_history}};
}

std::size_t RecommendationTrace::input_tokens() const noexcept {
  std::size_t sum = 0;
  for (const auto& s : stages) sum += s.input_tokens;
  return sum;
}

std::size_t RecommendationTrace::output_tokens() const noexcept {
  std::size_t sum = 0;
  for (const auto& s : stages) sum += s.output_tokens;
  return sum;
}

nlohmann::json RecommendationTrace::to_json() const {
  nlohmann::json doc;
  doc["session_id"] = session_id;
  doc["history"] = history;
  doc["interest"] = interest;
  auto& st = doc["stages"] = nlohmann::json::array();
  for (const auto& s : stages) st.push_back(stage_to_json(s));
  doc["visited"] = visited;
  doc["final_list"] = final_list;
  doc["input_tokens"] = input_tokens();
  doc["output_tokens"] = output_tokens();
  doc["aborted"] = aborted;
  if (aborted) doc["error"] = error;
  return doc;
}

RecommendationTrace RecommendationTrace::from_json(const nlohmann::json& doc) {
  try {
    RecommendationTrace t;
    t.session_id = doc.at("session_id").get<std::string>();
    t.history = doc.at("history").get<std::vector<std::string>>();
    t.interest = doc.at("interest").get<std::string>();
    for (const auto& s : doc.at("stages")) {
      StageRecord r;
      r.stage = parse_stage(s.at("stage").get<std::string>());
      r.node = s.at("node").get<LabelPath>();
      r.prompt = s.at("prompt").get<std::string>();
      r.reply = s.at("reply").get<std::string>();
      r.parsed = s.at("parsed").get<std::vector<std::string>>();
      r.input_tokens = s.at("input_tokens").get<std::size_t>();
      r.output_tokens = s.at("output_tokens").get<std::size_t>();
      r.malformed = s.at("malformed").get<bool>();
      t.stages.push_back(std::move(r));
    }
    t.visited = doc.at("visited").get<std::vector<LabelPath>>();
    t.final_list = doc.at("final_list").get<std::vector<std::string>>();
    t.aborted = doc.at("aborted").get<bool>();
    if (t.aborted) t.error = doc.value("error", std::string());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed trace: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed trace: ") + e.what());
  }
}

RecommendationTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace " + path.string());
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw DataError("trace is not valid JSON: " + path.string());
  return RecommendationTrace::from_json(doc);
}

void write_trace(const RecommendationTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write trace " + path.string());
  out << trace.to_json().dump(2) << '\n';
}

ChainRun::ChainRun(const ChainContext& context, std::string session_id)
    : ctx_(context), session_(session_id) {
  trace_.session_id = std::move(session_id);
}

std::vector<std::string> ChainRun::item_labels(std::span<const std::string> ids) const {
  std::vector<std::string> titles;
  titles.reserve(ids.size());
  for (const auto& id : ids) titles.push_back(ctx_.catalog.at(id).title);
  return display_labels(titles);
}

std::vector<std::size_t> ChainRun::ask_ranked(Stage stage, const LabelPath& node, const std::string& prompt,
                                              const LabelMatcher& matcher) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = ctx_.backend.complete(session_, prompt);
    StageRecord record{stage, node, prompt, reply, {}, count_tokens(prompt), count_tokens(reply), false};
    try {
      auto picked = parse_ranked_list(reply, matcher);
      for (auto idx : picked) record.parsed.push_back(matcher.vocabulary()[idx]);
      trace_.stages.push_back(std::move(record));
      return picked;
    } catch (const MalformedOutput&) {
      record.malformed = true;
      trace_.stages.push_back(std::move(record));
    }
  }
  return {};
}

std::string ChainRun::user_profile_modeling(std::span<const std::string> history_ids) {
  std::vector<std::string> known;
  for (const auto& id : history_ids) {
    if (ctx_.catalog.contains(id)) known.push_back(id);
  }
  if (known.empty()) throw EmptyHistory();
  const auto titles = item_labels(known);
  const auto prompt = render_profile_prompt(ctx_.templates, titles, ctx_.config.perspective);
  auto reply = ctx_.backend.complete(session_, prompt);
  clicked_.insert(known.begin(), known.end());
  trace_.history = std::move(known);
  trace_.interest = reply;
  trace_.stages.push_back({Stage::profile, {}, prompt, reply, {}, count_tokens(prompt), count_tokens(reply), false});
  return reply;
}

std::vector<const TreeNode*> ChainRun::item_tree_search(const TreeNode& node, const LabelPath& path, std::size_t m) {
  if (node.is_leaf()) throw std::invalid_argument("item_tree_search needs an internal node");
  std::vector<std::string> labels;
  labels.reserve(node.children.size());
  for (const auto& c : node.children) labels.push_back(c.label);
  const auto category = path.empty() ? std::string(kRootCategoryName) : text::join(path, " > ");
  const auto prompt = render_tree_search_prompt(ctx_.templates, category, labels, m, ctx_.config.perspective,
                                                trace_.interest);
  const LabelMatcher matcher(labels);
  auto picked = ask_ranked(Stage::tree_search, path, prompt, matcher);
  if (picked.size() > m) picked.resize(m);
  std::vector<const TreeNode*> out;
  out.reserve(picked.size());
  for (auto idx : picked) out.push_back(&node.children[idx]);
  return out;
}

std::vector<std::string> ChainRun::recall_from_leaf(const TreeNode& leaf, const LabelPath& path, std::size_t k) {
  if (!leaf.is_leaf() || leaf.items.empty()) throw NotALeaf("recall_from_leaf needs a non-empty leaf");
  std::vector<std::string> pool;
  pool.reserve(leaf.items.size());
  for (const auto& id : leaf.items) {
    if (!ctx_.config.exclude_history || !clicked_.count(id)) pool.push_back(id);
  }
  if (pool.empty()) return {};
  const auto labels = item_labels(pool);
  const auto topic = ctx_.tree.natural_path(path);
  const auto prompt = render_leaf_recall_prompt(ctx_.templates, labels, k, topic, ctx_.config.perspective,
                                                trace_.interest);
  const LabelMatcher matcher(labels);
  auto picked = ask_ranked(Stage::leaf_recall, path, prompt, matcher);
  if (picked.size() > k) picked.resize(k);
  std::vector<std::string> out;
  out.reserve(picked.size());
  for (auto idx : picked) out.push_back(pool[idx]);
  return out;
}

std::vector<std::string> ChainRun::diversity_rerank(const std::vector<std::string>& list) {
  if (list.size() <= 1) return list;
  const auto labels = item_labels(list);
  const auto prompt = render_rerank_prompt(ctx_.templates, labels, trace_.interest);
  const LabelMatcher matcher(labels);
  const auto picked = ask_ranked(Stage::rerank, {}, prompt, matcher);

  std::vector<std::string> out;
  out.reserve(list.size());
  std::vector<bool> placed(list.size(), false);
  for (auto idx : picked) {
    out.push_back(list[idx]);
    placed[idx] = true;
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!placed[i]) out.push_back(list[i]);
  }
  return out;
}

ChainResult run_chain(const ChainContext& context, std::span<const std::string> history_ids,
                      std::string session_id) {
  context.config.validate();
  ChainRun run(context, std::move(session_id));
  auto& trace = run.trace();
  std::vector<std::string> list;
  try {
    run.user_profile_modeling(history_ids);

    struct Frame {
      const TreeNode* node;
      LabelPath path;
    };
    std::vector<Frame> stack{{&context.tree.root(), {}}};
    while (list.size() < context.config.n && !stack.empty()) {
      auto frame = std::move(stack.back());
      stack.pop_back();
      trace.visited.push_back(frame.path);
      if (frame.node->is_leaf()) {
        auto items = run.recall_from_leaf(*frame.node, frame.path, context.config.k);
        list.insert(list.end(), items.begin(), items.end());
        continue;
      }
      const auto children = run.item_tree_search(*frame.node, frame.path, context.config.m);
      for (auto it = children.rbegin(); it != children.rend(); ++it) {
        auto child_path = frame.path;
        child_path.push_back((*it)->label);
        stack.push_back({*it, std::move(child_path)});
      }
    }
    if (list.size() > context.config.n) list.resize(context.config.n);
    if (context.config.rerank && !list.empty()) list = run.diversity_rerank(list);
  } catch (const BackendFailure& e) {
    trace.aborted = true;
    trace.error = e.what();
    trace.final_list = list;
    throw ChainAborted(e.what(), std::move(trace));
  }
  trace.final_list = list;
  return ChainResult{std::move(list), std::move(trace), run.session()};
}

}  // namespace treerec
