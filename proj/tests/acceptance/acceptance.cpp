#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "treerec/chain.hpp"
#include "treerec/cli.hpp"
#include "treerec/error.hpp"
#include "treerec/eval.hpp"
#include "treerec/metrics.hpp"
#include "treerec/mock_backend.hpp"
#include "treerec/synthetic.hpp"

using namespace treerec;
namespace fs = std::filesystem;
namespace oracle = treerec::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int number;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

std::vector<Item> kept(std::vector<Item> items) {
  std::erase_if(items, [](const Item& it) { return it.title.empty() || it.semantic_path.empty(); });
  return items;
}

Item item(std::string id, std::string title, std::vector<std::string> path) {
  return {std::move(id), std::move(title), std::move(path), std::nullopt};
}

ChainConfig chain_config(std::size_t n, std::size_t k, std::size_t m) {
  ChainConfig c;
  c.n = n;
  c.k = k;
  c.m = m;
  return c;
}

Outcome metric_oracles() {
  Rng rng(1000);
  std::size_t worst_case = 0;
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const auto universe = 5 + uniform_index(rng, 200);
    std::vector<std::string> ranked, relevant;
    for (auto i : sample_indices(rng, universe, uniform_index(rng, universe + 1))) ranked.push_back("i" + std::to_string(i));
    for (auto i : sample_indices(rng, universe, 1 + uniform_index(rng, 20))) relevant.push_back("i" + std::to_string(i));
    const auto cutoff = 1 + uniform_index(rng, 50);
    const IdSet set(relevant.begin(), relevant.end());
    const double dr = std::abs(*recall_at_k(ranked, set, cutoff) - oracle::oracle_recall(ranked, relevant, cutoff));
    const double dn = std::abs(*ndcg_at_k(ranked, set, cutoff) - oracle::oracle_ndcg(ranked, relevant, cutoff));
    if (std::max(dr, dn) > worst) {
      worst = std::max(dr, dn);
      worst_case = trial;
    }
  }
  return {worst <= 1e-12, fmt("1000 instances, max deviation %.3g", worst) +
                              (worst > 1e-12 ? " at instance " + std::to_string(worst_case) : "")};
}

void collect_nodes(const ItemTree& tree, const TreeNode& node, LabelPath& path, std::vector<std::string>& problems,
                   std::size_t& leaves, std::multiset<std::string>& seen) {
  if (node.is_leaf()) {
    ++leaves;
    if (node.items.empty()) problems.push_back("empty leaf");
    if (node.items.size() > tree.cap()) problems.push_back("leaf over cap");
    for (const auto& id : node.items) {
      seen.insert(id);
      if (tree.leaf_path(id) != path) problems.push_back("index disagrees for " + id);
    }
    return;
  }
  const auto parent = tree.natural_path(path);
  for (const auto& c : node.children) {
    path.push_back(c.label);
    const auto child = tree.natural_path(path);
    if (child.size() < parent.size() || !std::equal(parent.begin(), parent.end(), child.begin())) {
      problems.push_back("prefix broken below " + c.label);
    }
    collect_nodes(tree, c, path, problems, leaves, seen);
    path.pop_back();
  }
}

Outcome tree_partition() {
  Rng rng(2000);
  std::vector<std::string> problems;
  std::size_t total_items = 0, largest = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto size = 1 + uniform_index(rng, 10000);
    const auto depth = 1 + uniform_index(rng, 4);
    const auto cap = 1 + uniform_index(rng, 100);
    const auto items = oracle::random_catalog(rng, size, depth);
    largest = std::max(largest, items.size());
    ItemTree tree;
    try {
      tree = build_tree(items, cap);
    } catch (const EmptyCatalog&) {
      continue;
    }
    const auto expected = kept(items);
    total_items += expected.size();
    std::multiset<std::string> seen;
    std::size_t leaves = 0;
    LabelPath path;
    collect_nodes(tree, tree.root(), path, problems, leaves, seen);
    std::set<std::string> want;
    for (const auto& it : expected) {
      want.insert(it.id);
      if (tree.natural_path(tree.leaf_path(it.id)) != it.semantic_path) problems.push_back("path lost for " + it.id);
    }
    if (seen.size() != want.size() || std::set<std::string>(seen.begin(), seen.end()) != want) {
      problems.push_back("leaves do not partition catalog " + std::to_string(trial));
    }
    if (build_tree(items, cap).serialize() != tree.serialize()) problems.push_back("rebuild differs");
    if (!problems.empty()) break;
  }
  return {problems.empty(), problems.empty() ? "200 catalogs up to " + std::to_string(largest) + " items, " +
                                                   std::to_string(total_items) + " items placed"
                                             : problems.front()};
}

Outcome dfs_fidelity() {
  Rng rng(3000);
  std::size_t mismatches = 0;
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    auto items = kept(oracle::random_catalog(rng, 50 + uniform_index(rng, 600), 1 + uniform_index(rng, 4)));
    items.push_back(item("hist", "history story", {"zzz"}));
    const Catalog catalog(items);
    const auto tree = build_tree(items, 1 + uniform_index(rng, 40));
    const auto templates = TemplateSet::defaults();
    const auto n = 1 + uniform_index(rng, 40), k = 1 + uniform_index(rng, 8), m = 1 + uniform_index(rng, 6);
    const oracle::ForcedBackend backend(trial);
    auto config = chain_config(n, k, m);
    config.exclude_history = false;
    config.rerank = false;
    const ChainContext ctx{tree, catalog, backend, templates, config};
    const auto result = run_chain(ctx, std::vector<std::string>{"hist"});
    const auto ref = oracle::reference_dfs(tree, catalog, trial, n, k, m);
    std::vector<LabelPath> leaves;
    for (const auto& p : result.trace.visited) {
      if (tree.node_at(p).is_leaf()) leaves.push_back(p);
    }
    if (leaves != ref.leaves || result.items != ref.list) ++mismatches;
  }

  std::map<std::size_t, std::set<std::size_t>> observed;
  for (std::uint64_t trial = 0; trial < 30; ++trial) {
    auto items = oracle::full_leaf_catalog(rng, 8 + uniform_index(rng, 20), 20 + uniform_index(rng, 40), 2);
    items.push_back(item("hist", "a remembered story", {"zzz-history"}));
    const Catalog catalog(items);
    const auto tree = build_tree(items, kUnboundedCap);
    const auto templates = TemplateSet::defaults();
    const oracle::ForcedBackend backend(trial);
    for (std::size_t k : {5u, 10u, 20u}) {
      const ChainContext ctx{tree, catalog, backend, templates, chain_config(20, k, 100)};
      const auto result = run_chain(ctx, std::vector<std::string>{"hist"});
      std::set<LabelPath> contributing;
      for (const auto& id : result.items) contributing.insert(tree.leaf_path(id));
      observed[k].insert(result.items.size() == 20 ? contributing.size() : 0);
    }
  }
  const bool arithmetic = observed[5] == std::set<std::size_t>{4} && observed[10] == std::set<std::size_t>{2} &&
                          observed[20] == std::set<std::size_t>{1};
  std::string detail = std::to_string(200 - mismatches) + "/200 trees match the reference DFS; leaves for k=5/10/20:";
  for (std::size_t k : {5u, 10u, 20u}) {
    detail += " {";
    for (auto v : observed[k]) detail += std::to_string(v) + (v == *observed[k].rbegin() ? "" : ",");
    detail += "}";
  }
  return {mismatches == 0 && arithmetic, detail};
}

struct TokenRun {
  std::vector<RecommendationTrace> traces;
  std::size_t chain_input = 0;
  std::size_t full_input = 0;
  double worst_ratio = 0.0;
};

const TokenRun& token_run() {
  static const TokenRun run = [] {
    SyntheticSpec spec;
    spec.categories = 17;
    spec.total_items = 1217;
    spec.users = 20;
    spec.min_history = spec.max_history = 50;
    const auto world = make_synthetic_world(spec);
    const Catalog catalog(world.items);
    const auto tree = build_tree(world.items);
    const auto templates = TemplateSet::defaults();
    const auto mock = MockBackend::from_catalog(catalog, templates);
    const ChainConfig config;
    const ChainContext ctx{tree, catalog, mock, templates, config};
    std::vector<std::string> all;
    for (const auto& it : world.items) all.push_back(it.id);
    TokenRun out;
    for (const auto& row : world.interactions) {
      auto result = run_chain(ctx, row.history, row.user_id);
      const auto chain = result.trace.input_tokens();
      const auto full = full_enumeration_tokens(templates, catalog, row.history, all, config.n, config.perspective);
      out.chain_input += chain;
      out.full_input += full;
      out.worst_ratio = std::max(out.worst_ratio, static_cast<double>(chain) / static_cast<double>(full));
      out.traces.push_back(std::move(result.trace));
    }
    return out;
  }();
  return run;
}

Outcome token_reduction() {
  const auto& run = token_run();
  const double ratio = static_cast<double>(run.chain_input) / static_cast<double>(run.full_input);
  return {ratio <= 0.20 && run.worst_ratio <= 0.20,
          fmt("1217 items, 20 users: chain/full input tokens %.4f (worst user %.4f, reduction %.1f%%)", ratio,
              run.worst_ratio, 100.0 * (1.0 - ratio))};
}

Outcome stage_dominance() {
  const auto report = token_report(token_run().traces);
  const auto leaf = report.of(Stage::leaf_recall).input_share;
  bool dominant = true;
  std::string detail = "input shares:";
  for (auto s : kChainStages) {
    detail += " " + std::string(to_string(s)) + fmt(" %.3f", report.of(s).input_share);
    if (s != Stage::leaf_recall && report.of(s).input_share >= leaf) dominant = false;
  }
  return {dominant, detail};
}

Outcome hallucination_guard() {
  Rng rng(6000);
  auto items = kept(oracle::random_catalog(rng, 400, 2));
  const Catalog catalog(items);
  const auto tree = build_tree(items);
  const auto templates = TemplateSet::defaults();
  std::vector<std::string> titles;
  for (const auto& it : items) titles.push_back(it.title);

  std::size_t parse_violations = 0, rerank_violations = 0, empty = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::string> vocab;
    for (auto i : sample_indices(rng, titles.size(), 1 + uniform_index(rng, 60))) vocab.push_back(titles[i]);
    try {
      const auto parsed = parse_ranked_list(oracle::fuzz_reply(rng, vocab), vocab);
      const std::set<std::string> allowed(vocab.begin(), vocab.end());
      for (const auto& p : parsed) parse_violations += allowed.count(p) == 0;
    } catch (const MalformedOutput&) {
      ++empty;
    }
  }

  std::vector<std::string> current;
  const auto backend_rng = std::make_shared<Rng>(6001);
  struct FuzzBackend final : Backend {
    std::shared_ptr<Rng> rng;
    const std::vector<std::string>* vocab;
    std::string reply(const ChatSession&, std::string_view) const override { return oracle::fuzz_reply(*rng, *vocab); }
  };
  FuzzBackend backend;
  backend.rng = backend_rng;
  backend.vocab = &current;
  const ChainContext ctx{tree, catalog, backend, templates, ChainConfig{}};
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::string> list;
    current.clear();
    for (auto i : sample_indices(rng, items.size(), 1 + uniform_index(rng, 20))) {
      list.push_back(items[i].id);
      current.push_back(items[i].title);
    }
    ChainRun run(ctx, "fuzz");
    const auto out = run.diversity_rerank(list);
    if (!std::is_permutation(out.begin(), out.end(), list.begin(), list.end())) ++rerank_violations;
  }
  return {parse_violations == 0 && rerank_violations == 0,
          std::to_string(parse_violations) + " out-of-vocabulary entries in 10000 replies (" + std::to_string(empty) +
              " unusable), " + std::to_string(rerank_violations) + " non-permutation re-ranks in 10000"};
}

std::map<std::string, std::string> read_tree_files(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = buf.str();
  }
  return files;
}

Outcome end_to_end_determinism() {
  const auto dir = fs::temp_directory_path() / ("treerec-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto world = make_synthetic_world(SyntheticSpec{});
  {
    std::ofstream news(dir / "news.tsv");
    write_mind_news(news, world.items);
    std::ofstream behaviors(dir / "behaviors.tsv");
    write_mind_behaviors(behaviors, world.interactions);
    std::ofstream(dir / "config.json") << nlohmann::json{{"catalog", "news.tsv"},
                                                          {"behaviors", "behaviors.tsv"},
                                                          {"output_dir", "runs"},
                                                          {"parallelism", 2},
                                                          {"eval", {{"test_users", 50}, {"seed", 42}}}}
                                              .dump(2);
  }
  std::ostringstream out, err;
  const auto config = (dir / "config.json").string();
  const int a = run_cli({"evaluate", "--config", config, "--seed", "42", "--run-name", "first"}, out, err);
  const int b = run_cli({"evaluate", "--config", config, "--seed", "42", "--run-name", "second"}, out, err);
  Outcome o;
  if (a != kExitOk || b != kExitOk) {
    o = {false, "evaluate failed: " + err.str()};
  } else {
    const auto first = read_tree_files(dir / "runs" / "first");
    const auto second = read_tree_files(dir / "runs" / "second");
    std::size_t bytes = 0;
    for (const auto& [name, body] : first) bytes += body.size();
    o = {first == second && first.count("report.json") && first.size() > 3,
         std::to_string(first.size()) + " files, " + std::to_string(bytes) + " bytes, " +
             (first == second ? "identical" : "different")};
  }
  fs::remove_all(dir);
  return o;
}

// First verified run of this exact configuration (recomputed with the
// brute-force metric oracles), frozen.
constexpr double kPinnedTreeRecall = 0.195;  // 39 of 200 held-out clicks
constexpr double kPinnedTreeNdcg = 0.10593319615364426;
constexpr double kPinnedPopularityRecall = 0.02;

Outcome sanity_ordering() {
  const auto world = make_synthetic_world(SyntheticSpec{});
  const Catalog catalog(world.items);
  const auto templates = TemplateSet::defaults();
  const auto mock = MockBackend::from_catalog(catalog, templates);
  EvalConfig eval;
  eval.test_users = 100;
  const auto setup = prepare_evaluation(catalog, world.interactions, eval);
  const auto table = compare_baselines(setup, catalog, ChainConfig{}, eval, mock, templates);
  const auto& tree = table.rows[0];
  const auto& popularity = table.rows[2];
  const bool pinned = std::abs(tree.recall - kPinnedTreeRecall) < 1e-9 && std::abs(tree.ndcg - kPinnedTreeNdcg) < 1e-9 &&
                      std::abs(popularity.recall - kPinnedPopularityRecall) < 1e-9;
  auto detail = fmt("treerec Recall@20 %.6f NDCG@20 %.6f, popularity Recall@20 %.6f", tree.recall, tree.ndcg,
                    popularity.recall);
  detail += fmt(", flat ranker Recall@20 %.6f", table.rows[1].recall);
  if (!pinned) detail += " (differs from pinned values)";
  return {tree.recall >= popularity.recall && pinned, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", 5.0, metric_oracles},
      {2, "tree partition suite", 30.0, tree_partition},
      {3, "DFS fidelity", 10.0, dfs_fidelity},
      {4, "token reduction", 10.0, token_reduction},
      {5, "stage dominance", 0.0, stage_dominance},
      {6, "hallucination guard fuzz", 20.0, hallucination_guard},
      {7, "end-to-end determinism", 0.0, end_to_end_determinism},
      {8, "sanity ordering", 0.0, sanity_ordering},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" (over the %.0f s budget)", c.budget_s);
    }
    failures += !o.pass;
    std::printf("%s criterion %d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
