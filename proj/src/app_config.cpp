#include "treerec/app_config.hpp"

#include <fstream>
#include <set>

#include "treerec/error.hpp"

namespace treerec {
namespace {

using nlohmann::json;

void reject_secrets(const json& node, const std::string& where) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) {
      if (key == "api_key") {
        throw ConfigError("config must not contain an api key (" + where + key +
                          "); set the environment variable named by backend.api_key_env instead");
      }
      reject_secrets(value, where + key + ".");
    }
  } else if (node.is_array()) {
    for (const auto& value : node) reject_secrets(value, where);
  }
}

void check_keys(const json& obj, const std::string& section, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  const std::set<std::string_view> ok(allowed);
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown config key '" + section + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + key + "' has the wrong type");
  }
}

void read_size(const json& obj, const char* key, std::size_t& out, const std::string& section) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ConfigError("config key '" + section + key + "' must be a non-negative integer");
  }
  out = it->get<std::size_t>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " path configured");
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

}  // namespace

CatalogFormat parse_catalog_format(std::string_view name) {
  if (name == "mind") return CatalogFormat::mind;
  if (name == "jsonl") return CatalogFormat::jsonl;
  throw ConfigError("unknown catalog format '" + std::string(name) + "' (expected mind or jsonl)");
}

std::string_view to_string(CatalogFormat f) noexcept { return f == CatalogFormat::mind ? "mind" : "jsonl"; }

AppConfig AppConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  reject_secrets(doc, "");
  check_keys(doc, "",
             {"catalog", "behaviors", "templates", "backend", "chain", "eval", "parallelism", "leaf_cap",
              "output_dir"});
  AppConfig cfg;

  if (const auto it = doc.find("catalog"); it != doc.end()) {
    if (it->is_string()) {
      cfg.catalog_path = resolve(base_dir, it->get<std::string>());
    } else {
      check_keys(*it, "catalog.", {"path", "format"});
      std::string path, format = "mind";
      read(*it, "path", path, "catalog.");
      read(*it, "format", format, "catalog.");
      cfg.catalog_path = resolve(base_dir, path);
      cfg.catalog_format = parse_catalog_format(format);
    }
  }
  std::string path;
  read(doc, "behaviors", path, "");
  cfg.behaviors_path = resolve(base_dir, path);
  path.clear();
  read(doc, "templates", path, "");
  cfg.templates_path = resolve(base_dir, path);
  path = "runs";
  read(doc, "output_dir", path, "");
  cfg.output_dir = resolve(base_dir, path);
  read_size(doc, "leaf_cap", cfg.leaf_cap, "");
  read_size(doc, "parallelism", cfg.eval.parallelism, "");

  if (const auto it = doc.find("backend"); it != doc.end()) {
    const std::string s = "backend.";
    check_keys(*it, s,
               {"endpoint", "model", "temperature", "max_retries", "backoff_base_s", "timeout_s", "api_key_env"});
    read(*it, "endpoint", cfg.backend.endpoint, s);
    read(*it, "model", cfg.backend.model, s);
    read(*it, "temperature", cfg.backend.temperature, s);
    read(*it, "max_retries", cfg.backend.max_retries, s);
    read(*it, "backoff_base_s", cfg.backend.backoff_base_s, s);
    read(*it, "timeout_s", cfg.backend.timeout_s, s);
    read(*it, "api_key_env", cfg.backend.api_key_env, s);
  }
  if (const auto it = doc.find("chain"); it != doc.end()) {
    const std::string s = "chain.";
    check_keys(*it, s, {"n", "k", "m", "perspective", "rerank", "exclude_history"});
    read_size(*it, "n", cfg.chain.n, s);
    read_size(*it, "k", cfg.chain.k, s);
    read_size(*it, "m", cfg.chain.m, s);
    std::string perspective(to_string(cfg.chain.perspective));
    read(*it, "perspective", perspective, s);
    cfg.chain.perspective = parse_perspective(perspective);
    read(*it, "rerank", cfg.chain.rerank, s);
    read(*it, "exclude_history", cfg.chain.exclude_history, s);
  }
  if (const auto it = doc.find("eval"); it != doc.end()) {
    const std::string s = "eval.";
    check_keys(*it, s, {"cutoff", "leaf_fill", "flat_sample", "seed", "test_users", "max_history"});
    read_size(*it, "cutoff", cfg.eval.cutoff, s);
    read_size(*it, "leaf_fill", cfg.eval.leaf_fill, s);
    read_size(*it, "flat_sample", cfg.eval.flat_sample, s);
    read(*it, "seed", cfg.eval.seed, s);
    read_size(*it, "test_users", cfg.eval.test_users, s);
    read_size(*it, "max_history", cfg.eval.max_history, s);
  }
  return cfg;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("config is not a JSON object: " + path.string());
  return from_json(doc, path.parent_path());
}

json AppConfig::to_json() const {
  auto eval_doc = eval.to_json();
  eval_doc.erase("parallelism");
  return {{"catalog", {{"path", catalog_path.string()}, {"format", to_string(catalog_format)}}},
          {"behaviors", behaviors_path.string()},
          {"templates", templates_path.string()},
          {"backend",
           {{"endpoint", backend.endpoint},
            {"model", backend.model},
            {"temperature", backend.temperature},
            {"max_retries", backend.max_retries},
            {"backoff_base_s", backend.backoff_base_s},
            {"timeout_s", backend.timeout_s},
            {"api_key_env", backend.api_key_env}}},
          {"chain", chain.to_json()},
          {"eval", eval_doc},
          {"parallelism", eval.parallelism},
          {"leaf_cap", leaf_cap},
          {"output_dir", output_dir.string()}};
}

void AppConfig::validate() const {
  backend.validate();
  chain.validate();
  eval.validate();
  if (leaf_cap == 0) throw ConfigError("leaf_cap must be >= 1");
}

void AppConfig::require_catalog() const { require_file(catalog_path, "catalog"); }
void AppConfig::require_behaviors() const { require_file(behaviors_path, "behaviors"); }

}  // namespace treerec
