#include "treerec/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <omp.h>

#include "treerec/error.hpp"
#include "treerec/rng.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

// Stream ids for derive_seed so independent draws never share a sequence.
constexpr std::uint64_t kTestSampleStream = 1;
constexpr std::uint64_t kCandidateStream = 2;
constexpr std::uint64_t kFlatSampleStream = 1000;

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

void collect_leaves(const TreeNode& node, std::vector<const TreeNode*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  for (const auto& c : node.children) collect_leaves(c, out);
}

std::string session_name(std::string_view prefix, std::size_t index, const std::string& user) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return std::string(prefix) + buf + "-" + user;
}

// Runs body(i) for i in [0, count), in parallel when threads > 1, and
// rethrows the exception of the lowest failing index.
template <typename Body>
void for_each_user(std::size_t count, std::size_t threads, Body&& body) {
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
  if (threads > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(threads))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

IdSet id_set(const std::vector<std::string>& ids) { return IdSet(ids.begin(), ids.end()); }

}  // namespace

void EvalConfig::validate() const {
  if (cutoff == 0) throw ConfigError("eval cutoff K must be >= 1");
  if (leaf_fill == 0) throw ConfigError("eval leaf fill must be >= 1");
  if (flat_sample == 0) throw ConfigError("flat ranker sample size must be >= 1");
  if (test_users == 0) throw ConfigError("number of test users must be >= 1");
  if (max_history == 0) throw ConfigError("max history must be >= 1");
  if (parallelism == 0) throw ConfigError("parallelism must be >= 1");
}

nlohmann::json EvalConfig::to_json() const {
  return {{"cutoff", cutoff},         {"leaf_fill", leaf_fill},     {"flat_sample", flat_sample},
          {"seed", seed},             {"test_users", test_users},   {"max_history", max_history},
          {"parallelism", parallelism}};
}

CandidateSet build_candidate_set(const Catalog& catalog, const ItemTree& full_tree,
                                 std::span<const std::string> positives, std::size_t leaf_fill, std::uint64_t seed) {
  if (leaf_fill == 0) throw ConfigError("leaf fill must be >= 1");
  CandidateSet out;

  std::unordered_map<const TreeNode*, std::set<std::string>> by_leaf;
  for (const auto& id : positives) {
    if (!catalog.contains(id) || !full_tree.contains(id)) {
      ++out.dropped_positives;
      continue;
    }
    by_leaf[&full_tree.node_at(full_tree.leaf_path(id))].insert(id);
  }

  std::vector<const TreeNode*> leaves;
  collect_leaves(full_tree.root(), leaves);
  for (std::size_t ordinal = 0; ordinal < leaves.size(); ++ordinal) {
    const auto* leaf = leaves[ordinal];
    const auto hit = by_leaf.find(leaf);
    if (hit == by_leaf.end()) continue;
    const auto& chosen_positives = hit->second;
    ++out.touched_leaves;

    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < leaf->items.size(); ++i) {
      if (!chosen_positives.count(leaf->items[i])) negatives.push_back(i);
    }
    const auto want = leaf_fill > chosen_positives.size() ? leaf_fill - chosen_positives.size() : 0;
    Rng rng(derive_seed(seed, ordinal));
    std::vector<bool> keep(leaf->items.size(), false);
    for (auto pick : sample_indices(rng, negatives.size(), want)) keep[negatives[pick]] = true;
    for (std::size_t i = 0; i < leaf->items.size(); ++i) {
      if (keep[i] || chosen_positives.count(leaf->items[i])) out.items.push_back(catalog.at(leaf->items[i]));
    }
  }
  return out;
}

CandidateSet build_candidate_set(const Catalog& catalog, std::span<const std::string> positives,
                                 std::size_t leaf_fill, std::uint64_t seed) {
  const auto full_tree = build_tree(catalog.items(), kUnboundedCap);
  return build_candidate_set(catalog, full_tree, positives, leaf_fill, seed);
}

std::vector<std::string> popularity_baseline(std::span<const Interaction> train, std::size_t cutoff,
                                             const IdSet* restrict_to) {
  // A user's history is repeated on every impression row, so clicks are
  // counted once per (user, item) pair.
  std::set<std::pair<std::string_view, std::string_view>> clicks;
  for (const auto& row : train) {
    for (const auto& id : row.history) clicks.emplace(row.user_id, id);
    for (const auto& id : row.positives) clicks.emplace(row.user_id, id);
  }
  std::map<std::string_view, std::size_t> counts;
  for (const auto& [user, item] : clicks) {
    if (restrict_to == nullptr || restrict_to->count(std::string(item))) ++counts[item];
  }
  std::vector<std::pair<std::string_view, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < cutoff; ++i) out.emplace_back(ranked[i].first);
  return out;
}

FlatRankResult flat_ranker_baseline(ChatSession& session, const Backend& backend, const TemplateSet& templates,
                                    const Catalog& catalog, std::span<const std::string> history_ids,
                                    std::span<const std::string> candidates, std::size_t sample_size,
                                    std::uint64_t seed, std::size_t count, Perspective perspective) {
  if (candidates.empty()) throw std::invalid_argument("flat ranker needs at least one candidate");
  FlatRankResult out;
  Rng rng(seed);
  for (auto idx : sample_indices(rng, candidates.size(), sample_size)) out.sampled.push_back(candidates[idx]);

  std::vector<std::string> history_titles;
  for (const auto& id : history_ids) {
    if (const auto* item = catalog.find(id)) history_titles.push_back(item->title);
  }
  if (history_titles.empty()) throw EmptyHistory();
  std::vector<std::string> titles;
  for (const auto& id : out.sampled) titles.push_back(catalog.at(id).title);
  const auto labels = display_labels(titles);

  const auto prompt =
      render_flat_rank_prompt(templates, display_labels(history_titles), labels, count, perspective);
  const LabelMatcher matcher(labels);
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = backend.complete(session, prompt);
    StageRecord record{Stage::flat_rank, {}, prompt, reply, {}, count_tokens(prompt), count_tokens(reply), false};
    try {
      for (auto idx : parse_ranked_list(reply, matcher)) {
        record.parsed.push_back(labels[idx]);
        out.ranked.push_back(out.sampled[idx]);
      }
      out.stages.push_back(std::move(record));
      break;
    } catch (const MalformedOutput&) {
      record.malformed = true;
      out.stages.push_back(std::move(record));
    }
  }
  if (out.ranked.size() > count) out.ranked.resize(count);
  return out;
}

std::size_t full_enumeration_tokens(const TemplateSet& templates, const Catalog& catalog,
                                    std::span<const std::string> history_ids, std::span<const std::string> candidates,
                                    std::size_t count, Perspective perspective) {
  std::vector<std::string> history_titles;
  for (const auto& id : history_ids) {
    if (const auto* item = catalog.find(id)) history_titles.push_back(item->title);
  }
  std::vector<std::string> titles;
  for (const auto& id : candidates) titles.push_back(catalog.at(id).title);
  return count_tokens(render_flat_rank_prompt(templates, display_labels(history_titles), display_labels(titles),
                                              count, perspective));
}

const StageTokens& TokenReport::of(Stage s) const {
  for (std::size_t i = 0; i < kChainStages.size(); ++i) {
    if (kChainStages[i] == s) return stages[i];
  }
  throw std::invalid_argument("not a chain stage: " + std::string(to_string(s)));
}

nlohmann::json TokenReport::to_json() const {
  nlohmann::json doc;
  for (std::size_t i = 0; i < kChainStages.size(); ++i) {
    const auto& st = stages[i];
    doc["stages"][std::string(to_string(kChainStages[i]))] = {{"input", st.input},
                                                              {"output", st.output},
                                                              {"input_share", st.input_share},
                                                              {"output_share", st.output_share}};
  }
  doc["total_input"] = total_input;
  doc["total_output"] = total_output;
  doc["sessions"] = sessions;
  return doc;
}

std::string TokenReport::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %12s %8s %12s %8s\n", "stage", "input", "share", "output", "share");
  out << line;
  for (std::size_t i = 0; i < kChainStages.size(); ++i) {
    const auto& st = stages[i];
    std::snprintf(line, sizeof line, "%-12s %12zu %7.2f%% %12zu %7.2f%%\n",
                  std::string(to_string(kChainStages[i])).c_str(), st.input, 100.0 * st.input_share, st.output,
                  100.0 * st.output_share);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %12zu %8s %12zu %8s  (%zu sessions)\n", "total", total_input, "",
                total_output, "", sessions);
  out << line;
  return out.str();
}

TokenReport token_report(std::span<const RecommendationTrace> traces) {
  TokenReport report;
  report.sessions = traces.size();
  for (const auto& trace : traces) {
    for (const auto& record : trace.stages) {
      for (std::size_t i = 0; i < kChainStages.size(); ++i) {
        if (kChainStages[i] != record.stage) continue;
        report.stages[i].input += record.input_tokens;
        report.stages[i].output += record.output_tokens;
        report.total_input += record.input_tokens;
        report.total_output += record.output_tokens;
      }
    }
  }
  for (auto& st : report.stages) {
    if (report.total_input) st.input_share = static_cast<double>(st.input) / static_cast<double>(report.total_input);
    if (report.total_output) {
      st.output_share = static_cast<double>(st.output) / static_cast<double>(report.total_output);
    }
  }
  return report;
}

nlohmann::json Diagnostics::to_json() const {
  return {{"interactions", interactions},
          {"dropped_history_ids", dropped_history_ids},
          {"dropped_positive_ids", dropped_positive_ids},
          {"users_without_history", users_without_history},
          {"dropped_candidate_positives", dropped_candidate_positives},
          {"test_users", test_users},
          {"train_users", train_users},
          {"candidate_items", candidate_items},
          {"candidate_leaves", candidate_leaves},
          {"skipped_catalog_rows", skipped_catalog_rows},
          {"skipped_behavior_rows", skipped_behavior_rows}};
}

EvalSetup prepare_evaluation(const Catalog& catalog, std::span<const Interaction> interactions,
                             const EvalConfig& config) {
  config.validate();
  EvalSetup setup;
  auto& diag = setup.diagnostics;

  std::vector<Interaction> rows(interactions.begin(), interactions.end());
  diag.interactions = rows.size();
  const auto resolved = resolve_against(catalog, rows);
  diag.dropped_history_ids = resolved.dropped_history;
  diag.dropped_positive_ids = resolved.dropped_positives;

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = truncate_history(std::move(rows[i]), config.max_history);
    if (rows[i].history.empty()) {
      ++diag.users_without_history;
    } else {
      eligible.push_back(i);
    }
  }
  Rng rng(derive_seed(config.seed, kTestSampleStream));
  auto picked = sample_indices(rng, eligible.size(), config.test_users);
  std::sort(picked.begin(), picked.end());
  std::vector<bool> is_test(rows.size(), false);
  for (auto p : picked) is_test[eligible[p]] = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (is_test[i] ? setup.test : setup.train).push_back(std::move(rows[i]));
  }

  std::vector<std::string> positives;
  std::unordered_set<std::string> seen;
  for (const auto& row : setup.test) {
    for (const auto& id : row.positives) {
      if (seen.insert(id).second) positives.push_back(id);
    }
  }
  auto candidates = build_candidate_set(catalog, positives, config.leaf_fill,
                                        derive_seed(config.seed, kCandidateStream));
  diag.candidate_items = candidates.items.size();
  diag.candidate_leaves = candidates.touched_leaves;
  if (candidates.items.empty()) throw EmptyCatalog("no test positive maps to a catalog leaf");

  setup.candidate_tree = build_tree(candidates.items, config.leaf_fill);
  setup.candidates = Catalog(std::move(candidates.items));
  for (auto& row : setup.test) {
    const auto before = row.positives.size();
    std::erase_if(row.positives, [&](const std::string& id) { return !setup.candidates.contains(id); });
    diag.dropped_candidate_positives += before - row.positives.size();
  }
  diag.test_users = setup.test.size();
  diag.train_users = setup.train.size();
  return setup;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc;
  doc["chain"] = chain.to_json();
  doc["eval"] = eval.to_json();
  doc["summary"] = {{"mean_recall", mean_recall},
                    {"mean_ndcg", mean_ndcg},
                    {"mean_distinct_leaves", mean_distinct_leaves},
                    {"scored_users", scored_users},
                    {"excluded_users", excluded_users}};
  doc["tokens"] = tokens.to_json();
  doc["diagnostics"] = diagnostics.to_json();
  auto& arr = doc["users"] = nlohmann::json::array();
  for (const auto& u : users) {
    arr.push_back({{"user_id", u.user_id},
                   {"recall", optional_number(u.recall)},
                   {"ndcg", optional_number(u.ndcg)},
                   {"relevant", u.relevant},
                   {"distinct_leaves", u.distinct_leaves},
                   {"ranked", u.ranked}});
  }
  return doc;
}

std::string EvalReport::serialize() const { return to_json().dump(2) + "\n"; }

std::string EvalReport::per_user_csv() const {
  std::string out = "user_id,recall,ndcg,relevant,distinct_leaves\n";
  for (const auto& u : users) {
    out += u.user_id + "," + (u.recall ? fixed(*u.recall) : "") + "," + (u.ndcg ? fixed(*u.ndcg) : "") + "," +
           std::to_string(u.relevant) + "," + std::to_string(u.distinct_leaves) + "\n";
  }
  return out;
}

EvalRun evaluate_prepared(const EvalSetup& setup, const Catalog& catalog, const ChainConfig& chain,
                          const EvalConfig& eval, const Backend& backend, const TemplateSet& templates,
                          bool parallel) {
  chain.validate();
  eval.validate();
  const ChainContext context{setup.candidate_tree, catalog, backend, templates, chain};
  const auto count = setup.test.size();

  EvalRun run;
  auto& report = run.report;
  report.chain = chain;
  report.eval = eval;
  report.diagnostics = setup.diagnostics;
  report.users.resize(count);
  run.traces.resize(count);

  for_each_user(count, parallel ? eval.parallelism : 1, [&](std::size_t i) {
    const auto& row = setup.test[i];
    auto result = run_chain(context, row.history, session_name("u", i, row.user_id));
    const auto relevant = id_set(row.positives);
    std::set<LabelPath> leaves;
    for (const auto& id : result.items) leaves.insert(setup.candidate_tree.leaf_path(id));

    auto& user = report.users[i];
    user.user_id = row.user_id;
    user.recall = recall_at_k(result.items, relevant, eval.cutoff);
    user.ndcg = ndcg_at_k(result.items, relevant, eval.cutoff);
    user.relevant = relevant.size();
    user.distinct_leaves = leaves.size();
    user.ranked = std::move(result.items);
    run.traces[i] = std::move(result.trace);
  });

  std::vector<RankingScore> scores;
  scores.reserve(count);
  double leaves_sum = 0.0;
  for (const auto& u : report.users) {
    scores.push_back({u.recall, u.ndcg});
    leaves_sum += static_cast<double>(u.distinct_leaves);
  }
  const auto mean = mean_scores(scores);
  report.mean_recall = mean.recall;
  report.mean_ndcg = mean.ndcg;
  report.scored_users = mean.scored;
  report.excluded_users = mean.excluded;
  report.mean_distinct_leaves = count ? leaves_sum / static_cast<double>(count) : 0.0;
  report.tokens = token_report(run.traces);
  return run;
}

EvalRun evaluate(const Catalog& catalog, std::span<const Interaction> interactions, const ChainConfig& chain,
                 const EvalConfig& eval, const Backend& backend, const TemplateSet& templates) {
  const auto setup = prepare_evaluation(catalog, interactions, eval);
  return evaluate_prepared(setup, catalog, chain, eval, backend, templates, true);
}

EvalRun evaluate_serial(const Catalog& catalog, std::span<const Interaction> interactions, const ChainConfig& chain,
                        const EvalConfig& eval, const Backend& backend, const TemplateSet& templates) {
  const auto setup = prepare_evaluation(catalog, interactions, eval);
  return evaluate_prepared(setup, catalog, chain, eval, backend, templates, false);
}

std::vector<SweepPoint> k_sweep(std::span<const std::size_t> ks, const EvalSetup& setup, const Catalog& catalog,
                                const ChainConfig& chain, const EvalConfig& eval, const Backend& backend,
                                const TemplateSet& templates) {
  std::vector<SweepPoint> points;
  for (auto k : ks) {
    auto config = chain;
    config.k = k;
    const auto run = evaluate_prepared(setup, catalog, config, eval, backend, templates, true);
    points.push_back({k, run.report.mean_recall, run.report.mean_ndcg, run.report.mean_distinct_leaves});
  }
  return points;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "k,recall,ndcg,leaves\n";
  for (const auto& p : points) {
    out += std::to_string(p.k) + "," + fixed(p.recall) + "," + fixed(p.ndcg) + "," + fixed(p.distinct_leaves) + "\n";
  }
  return out;
}

nlohmann::json BaselineComparison::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"method", r.method},
                   {"recall", r.recall},
                   {"ndcg", r.ndcg},
                   {"scored_users", r.scored_users},
                   {"input_tokens", r.input_tokens}});
  }
  return {{"methods", arr}};
}

std::string BaselineComparison::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %8s %14s\n", "method", "recall", "ndcg", "users", "input_tokens");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %8zu %14zu\n", r.method.c_str(), r.recall, r.ndcg,
                  r.scored_users, r.input_tokens);
    out << line;
  }
  return out.str();
}

BaselineComparison compare_baselines(const EvalSetup& setup, const Catalog& catalog, const ChainConfig& chain,
                                     const EvalConfig& eval, const Backend& backend, const TemplateSet& templates) {
  BaselineComparison out;

  const auto tree_run = evaluate_prepared(setup, catalog, chain, eval, backend, templates, true);
  out.rows.push_back({"treerec", tree_run.report.mean_recall, tree_run.report.mean_ndcg,
                      tree_run.report.scored_users, tree_run.report.tokens.total_input});

  std::vector<std::string> candidate_ids;
  for (const auto& item : setup.candidates.items()) candidate_ids.push_back(item.id);

  const auto count = setup.test.size();
  std::vector<RankingScore> flat_scores(count);
  std::vector<std::size_t> flat_tokens(count, 0);
  for_each_user(count, eval.parallelism, [&](std::size_t i) {
    const auto& row = setup.test[i];
    ChatSession session(session_name("flat-u", i, row.user_id));
    const auto result = flat_ranker_baseline(session, backend, templates, catalog, row.history, candidate_ids,
                                             eval.flat_sample, derive_seed(eval.seed, kFlatSampleStream + i),
                                             eval.cutoff, chain.perspective);
    const auto relevant = id_set(row.positives);
    flat_scores[i] = {recall_at_k(result.ranked, relevant, eval.cutoff), ndcg_at_k(result.ranked, relevant, eval.cutoff)};
    flat_tokens[i] = session.input_tokens();
  });
  const auto flat_mean = mean_scores(flat_scores);
  std::size_t flat_total = 0;
  for (auto t : flat_tokens) flat_total += t;
  out.rows.push_back({"flat_ranker", flat_mean.recall, flat_mean.ndcg, flat_mean.scored, flat_total});

  const IdSet candidate_set(candidate_ids.begin(), candidate_ids.end());
  // Test users' histories are observed clicks too; their held-out positives are not.
  std::vector<Interaction> observed(setup.train.begin(), setup.train.end());
  for (const auto& row : setup.test) observed.push_back({row.user_id, row.history, {}, {}});
  const auto popular = popularity_baseline(observed, eval.cutoff, &candidate_set);
  std::vector<RankingScore> pop_scores;
  for (const auto& row : setup.test) {
    const auto relevant = id_set(row.positives);
    pop_scores.push_back({recall_at_k(popular, relevant, eval.cutoff), ndcg_at_k(popular, relevant, eval.cutoff)});
  }
  const auto pop_mean = mean_scores(pop_scores);
  out.rows.push_back({"popularity", pop_mean.recall, pop_mean.ndcg, pop_mean.scored, 0});
  return out;
}

}  // namespace treerec
