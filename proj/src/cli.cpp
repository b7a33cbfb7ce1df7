#include "treerec/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "treerec/app_config.hpp"
#include "treerec/chain.hpp"
#include "treerec/corpus.hpp"
#include "treerec/error.hpp"
#include "treerec/eval.hpp"
#include "treerec/item_tree.hpp"
#include "treerec/llm_backend.hpp"
#include "treerec/prompts.hpp"
#include "treerec/text.hpp"

namespace treerec {
namespace {

namespace fs = std::filesystem;

// Flags shared by every command that runs the pipeline.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> endpoint;
  std::optional<std::size_t> n, k, m, users, parallelism;
  std::optional<std::string> perspective;
  bool no_rerank = false;
  std::optional<std::string> out;
  std::string run_name;
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "JSON config file");
  cmd.add_option("--seed", o.seed, "random seed");
  cmd.add_option("--backend", o.backend, "mock or http")->check(CLI::IsMember({"mock", "http"}));
  cmd.add_option("--endpoint", o.endpoint, "chat-completions URL for the http backend");
  cmd.add_option("--n", o.n, "recommended list length");
  cmd.add_option("--k", o.k, "items recalled per leaf");
  cmd.add_option("--m", o.m, "children kept per tree-search step");
  cmd.add_option("--perspective", o.perspective, "interest, relevance, action or recommendation");
  cmd.add_flag("--no-rerank", o.no_rerank, "skip the diversity re-rank stage");
  cmd.add_option("--users", o.users, "number of test users");
  cmd.add_option("--parallelism", o.parallelism, "concurrent chains");
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_option("--run-name", o.run_name, "name of the run directory (default: command and UTC time)");
}

AppConfig resolve_config(const Overrides& o) {
  AppConfig cfg = o.config.empty() ? AppConfig{} : AppConfig::load(o.config);
  if (o.seed) cfg.eval.seed = *o.seed;
  if (o.endpoint) cfg.backend.endpoint = *o.endpoint;
  if (o.backend) {
    if (*o.backend == "mock") {
      cfg.backend.endpoint = "mock";
    } else if (cfg.backend.is_mock()) {
      throw ConfigError("--backend http needs an endpoint URL (config backend.endpoint or --endpoint)");
    }
  }
  if (o.n) cfg.chain.n = *o.n;
  if (o.k) cfg.chain.k = *o.k;
  if (o.m) cfg.chain.m = *o.m;
  if (o.perspective) cfg.chain.perspective = parse_perspective(*o.perspective);
  if (o.no_rerank) cfg.chain.rerank = false;
  if (o.users) cfg.eval.test_users = *o.users;
  if (o.parallelism) cfg.eval.parallelism = *o.parallelism;
  if (o.out) cfg.output_dir = *o.out;
  cfg.validate();
  return cfg;
}

void warn_chain(const AppConfig& cfg, std::ostream& err) {
  for (const auto& w : cfg.chain.validate()) err << "warning: " << w << '\n';
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const AppConfig& cfg, const std::string& command, const std::string& run_name) {
  const std::string base = run_name.empty() ? command + "-" + utc_stamp() : run_name;
  const auto root = cfg.output_dir.lexically_normal();
  fs::path dir = root / base;
  for (int i = 2; fs::exists(dir); ++i) dir = root / (base + "-" + std::to_string(i));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

TemplateSet load_templates(const AppConfig& cfg) {
  return cfg.templates_path.empty() ? TemplateSet::defaults() : TemplateSet::load(cfg.templates_path);
}

Loaded<Item> load_items(const AppConfig& cfg) {
  cfg.require_catalog();
  return cfg.catalog_format == CatalogFormat::mind ? load_mind_catalog(cfg.catalog_path)
                                                   : load_catalog_records(cfg.catalog_path);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + std::to_string(v[i]);
  return s;
}

void print_stats(const ItemTree& tree, std::ostream& out) {
  const auto st = tree_stats(tree);
  out << "items:         " << tree.item_count() << '\n'
      << "discarded:     " << tree.discarded() << '\n'
      << "depth:         " << st.depth << '\n'
      << "layer counts:  " << join_sizes(st.layer_counts) << '\n'
      << "leaves:        " << st.leaf_count << '\n'
      << "max leaf size: " << st.max_leaf_size << '\n'
      << "leaf cap:      " << (tree.cap() == kUnboundedCap ? std::string("none") : std::to_string(tree.cap()))
      << '\n';
}

nlohmann::json stats_json(const ItemTree& tree) {
  const auto st = tree_stats(tree);
  return {{"items", tree.item_count()}, {"discarded", tree.discarded()},     {"depth", st.depth},
          {"layer_counts", st.layer_counts}, {"leaves", st.leaf_count}, {"max_leaf_size", st.max_leaf_size}};
}

ItemTree read_tree(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open tree " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return ItemTree::parse(buf.str());
}

struct EvalInputs {
  Catalog catalog;
  EvalSetup setup;
};

EvalInputs load_eval_inputs(const AppConfig& cfg) {
  cfg.require_behaviors();
  auto items = load_items(cfg);
  auto behaviors = load_behaviors(cfg.behaviors_path);
  EvalInputs in{Catalog(std::move(items.records)), {}};
  in.setup = prepare_evaluation(in.catalog, behaviors.records, cfg.eval);
  in.setup.diagnostics.skipped_catalog_rows = items.skipped;
  in.setup.diagnostics.skipped_behavior_rows = behaviors.skipped;
  return in;
}

void write_traces(const fs::path& dir, const std::vector<RecommendationTrace>& traces) {
  fs::create_directories(dir);
  for (const auto& t : traces) write_trace(t, dir / (t.session_id + ".json"));
}

int cmd_build_tree(const Overrides& o, std::ostream& out) {
  const auto cfg = resolve_config(o);
  const auto items = load_items(cfg);
  const auto tree = build_tree(items.records, cfg.leaf_cap);
  const auto dir = make_run_dir(cfg, "build-tree", o.run_name);
  write_file(dir / "tree.json", tree.serialize());
  auto stats = stats_json(tree);
  stats["skipped_rows"] = items.skipped;
  write_file(dir / "stats.json", stats.dump(2) + "\n");
  out << "skipped rows:  " << items.skipped << '\n';
  print_stats(tree, out);
  out << "run directory: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_inspect_tree(const Overrides& o, const std::string& tree_path, const std::vector<std::string>& node,
                     std::ostream& out) {
  std::optional<ItemTree> tree;
  if (!tree_path.empty()) {
    tree = read_tree(tree_path);
  } else {
    const auto cfg = resolve_config(o);
    tree = build_tree(load_items(cfg).records, cfg.leaf_cap);
  }
  if (node.empty()) print_stats(*tree, out);
  const auto& n = tree->node_at(node);
  out << "node: " << (node.empty() ? std::string("(root)") : text::join(node, " > "))
      << (n.synthetic ? " [synthetic]" : "") << '\n';
  if (n.is_leaf()) {
    out << n.items.size() << " items\n";
    for (const auto& id : n.items) out << "  " << id << '\n';
  } else {
    out << n.children.size() << " children\n";
    for (const auto& c : n.children) {
      std::size_t items = 0;
      std::vector<const TreeNode*> stack{&c};
      while (!stack.empty()) {
        const auto* cur = stack.back();
        stack.pop_back();
        items += cur->items.size();
        for (const auto& g : cur->children) stack.push_back(&g);
      }
      out << "  " << c.label << (c.synthetic ? " [synthetic]" : "") << "\t" << items << '\n';
    }
  }
  return kExitOk;
}

std::vector<std::string> read_history_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open history file " + path.string());
  std::vector<std::string> ids;
  for (std::string id; in >> id;) ids.push_back(id);
  return ids;
}

int cmd_recommend(const Overrides& o, const std::string& user, const std::string& history_path,
                  std::ostream& out, std::ostream& err) {
  if (user.empty() == history_path.empty()) throw ConfigError("recommend needs exactly one of --user or --history");
  const auto cfg = resolve_config(o);
  warn_chain(cfg, err);
  const auto templates = load_templates(cfg);
  const Catalog catalog(load_items(cfg).records);

  Interaction row;
  if (!user.empty()) {
    cfg.require_behaviors();
    // Behaviour logs repeat a user's history on every impression; take the longest.
    bool found = false;
    for (auto& r : load_behaviors(cfg.behaviors_path).records) {
      if (r.user_id == user && (!found || r.history.size() > row.history.size())) {
        row = std::move(r);
        found = true;
      }
    }
    if (!found) throw DataError("user " + user + " not found in " + cfg.behaviors_path.string());
  } else {
    row.user_id = "history";
    row.history = read_history_file(history_path);
  }
  std::vector<Interaction> rows{std::move(row)};
  const auto dropped = resolve_against(catalog, rows);
  if (dropped.dropped_history) err << "warning: " << dropped.dropped_history << " unknown history ids dropped\n";
  const auto interaction = truncate_history(std::move(rows.front()), cfg.eval.max_history);

  const auto tree = build_tree(catalog.items(), cfg.leaf_cap);
  const auto backend = make_backend(cfg.backend, catalog, templates);
  const ChainContext ctx{tree, catalog, *backend, templates, cfg.chain};
  const auto dir = make_run_dir(cfg, "recommend", o.run_name);
  try {
    const auto result = run_chain(ctx, interaction.history, "recommend-" + interaction.user_id);
    write_trace(result.trace, dir / "trace.json");
    write_transcript(result.session, dir / "transcript.json");
    std::string table;
    for (std::size_t i = 0; i < result.items.size(); ++i) {
      table += std::to_string(i + 1) + "\t" + result.items[i] + "\t" + catalog.at(result.items[i]).title + "\n";
    }
    write_file(dir / "recommendations.tsv", table);
    out << table << "input tokens:  " << result.trace.input_tokens() << '\n'
        << "output tokens: " << result.trace.output_tokens() << '\n'
        << "run directory: " << dir.string() << '\n';
  } catch (const ChainAborted& e) {
    write_trace(e.trace(), dir / "trace.json");
    throw;
  }
  return kExitOk;
}

void print_summary(const EvalReport& r, std::ostream& out) {
  char line[200];
  std::snprintf(line, sizeof line, "Recall@%zu %.4f  NDCG@%zu %.4f  distinct leaves %.2f  (%zu scored, %zu excluded)\n",
                r.eval.cutoff, r.mean_recall, r.eval.cutoff, r.mean_ndcg, r.mean_distinct_leaves, r.scored_users,
                r.excluded_users);
  out << line;
}

int cmd_evaluate(const Overrides& o, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o);
  warn_chain(cfg, err);
  const auto templates = load_templates(cfg);
  const auto in = load_eval_inputs(cfg);
  const auto backend = make_backend(cfg.backend, in.catalog, templates);
  const auto run = evaluate_prepared(in.setup, in.catalog, cfg.chain, cfg.eval, *backend, templates,
                                     cfg.eval.parallelism > 1);
  const auto dir = make_run_dir(cfg, "evaluate", o.run_name);
  write_file(dir / "report.json", run.report.serialize());
  write_file(dir / "per_user.csv", run.report.per_user_csv());
  write_file(dir / "tokens.json", run.report.tokens.to_json().dump(2) + "\n");
  write_traces(dir / "traces", run.traces);
  print_summary(run.report, out);
  out << run.report.tokens.table() << "run directory: " << dir.string() << '\n';
  return kExitOk;
}

std::vector<std::size_t> parse_ks(const std::string& list) {
  std::vector<std::size_t> ks;
  for (const auto& part : text::split(list, ',')) {
    const auto t = text::trim(part);
    std::size_t value = 0;
    std::size_t used = 0;
    try {
      value = std::stoul(std::string(t), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != t.size() || value == 0) throw ConfigError("invalid k value '" + std::string(t) + "'");
    ks.push_back(value);
  }
  if (ks.empty()) throw ConfigError("--ks needs at least one value");
  return ks;
}

int cmd_sweep_k(const Overrides& o, const std::string& ks_list, std::ostream& out) {
  const auto ks = parse_ks(ks_list);
  const auto cfg = resolve_config(o);
  const auto templates = load_templates(cfg);
  const auto in = load_eval_inputs(cfg);
  const auto backend = make_backend(cfg.backend, in.catalog, templates);
  const auto points = k_sweep(ks, in.setup, in.catalog, cfg.chain, cfg.eval, *backend, templates);
  const auto dir = make_run_dir(cfg, "sweep-k", o.run_name);
  const auto csv = sweep_csv(points);
  write_file(dir / "sweep.csv", csv);
  out << csv << "run directory: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_token_report(const Overrides& o, const std::string& traces_dir, std::ostream& out) {
  TokenReport report;
  if (!traces_dir.empty()) {
    if (!fs::is_directory(traces_dir)) throw ConfigError("trace directory not found: " + traces_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(traces_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RecommendationTrace> traces;
    for (const auto& f : files) traces.push_back(read_trace(f));
    report = token_report(traces);
    out << report.table();
    return kExitOk;
  }
  const auto cfg = resolve_config(o);
  const auto templates = load_templates(cfg);
  const auto in = load_eval_inputs(cfg);
  const auto backend = make_backend(cfg.backend, in.catalog, templates);
  const auto run = evaluate_prepared(in.setup, in.catalog, cfg.chain, cfg.eval, *backend, templates,
                                     cfg.eval.parallelism > 1);
  const auto dir = make_run_dir(cfg, "token-report", o.run_name);
  write_file(dir / "tokens.json", run.report.tokens.to_json().dump(2) + "\n");
  write_traces(dir / "traces", run.traces);
  out << run.report.tokens.table() << "run directory: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_compare_baselines(const Overrides& o, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o);
  warn_chain(cfg, err);
  const auto templates = load_templates(cfg);
  const auto in = load_eval_inputs(cfg);
  const auto backend = make_backend(cfg.backend, in.catalog, templates);
  const auto table = compare_baselines(in.setup, in.catalog, cfg.chain, cfg.eval, *backend, templates);
  const auto dir = make_run_dir(cfg, "compare-baselines", o.run_name);
  write_file(dir / "baselines.json", table.to_json().dump(2) + "\n");
  out << table.table() << "run directory: " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-guided LLM recommendation toolkit", "treerec"};
  app.require_subcommand(1);

  Overrides o;
  std::string tree_path, user, history_path, traces_dir, ks = "1,2,5,10,20";
  std::vector<std::string> node;

  auto* build = app.add_subcommand("build-tree", "Build the item tree and print its shape");
  add_common(*build, o);
  auto* inspect = app.add_subcommand("inspect-tree", "Show a node of a serialized or freshly built tree");
  add_common(*inspect, o);
  inspect->add_option("--tree", tree_path, "serialized tree file");
  inspect->add_option("--node", node, "label path from the root, one label per flag");
  auto* recommend = app.add_subcommand("recommend", "Run the recommendation chain for one user");
  add_common(*recommend, o);
  recommend->add_option("--user", user, "user id from the behaviors file");
  recommend->add_option("--history", history_path, "file of clicked item ids, whitespace separated");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Offline evaluation over sampled test users");
  add_common(*evaluate_cmd, o);
  auto* sweep = app.add_subcommand("sweep-k", "Evaluate across leaf recall budgets");
  add_common(*sweep, o);
  sweep->add_option("--ks", ks, "comma-separated k values")->capture_default_str();
  auto* tokens = app.add_subcommand("token-report", "Per-stage token usage");
  add_common(*tokens, o);
  tokens->add_option("--traces", traces_dir, "directory of saved traces");
  auto* baselines = app.add_subcommand("compare-baselines", "Tree chain against flat ranker and popularity");
  add_common(*baselines, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (build->parsed()) return cmd_build_tree(o, out);
    if (inspect->parsed()) return cmd_inspect_tree(o, tree_path, node, out);
    if (recommend->parsed()) return cmd_recommend(o, user, history_path, out, err);
    if (evaluate_cmd->parsed()) return cmd_evaluate(o, out, err);
    if (sweep->parsed()) return cmd_sweep_k(o, ks, out);
    if (tokens->parsed()) return cmd_token_report(o, traces_dir, out);
    if (baselines->parsed()) return cmd_compare_baselines(o, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const BackendFailure& e) {
    err << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace treerec
