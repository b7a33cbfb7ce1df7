#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "treerec/chain.hpp"
#include "treerec/eval.hpp"
#include "treerec/item_tree.hpp"
#include "treerec/llm_backend.hpp"

namespace treerec {

enum class CatalogFormat { mind, jsonl };

// Everything a command needs, read from one JSON file and then overridden by
// flags. Relative paths are resolved against the config file's directory.
// Secrets never live here: a key named "api_key" anywhere is rejected.
struct AppConfig {
  std::filesystem::path catalog_path;
  CatalogFormat catalog_format = CatalogFormat::mind;
  std::filesystem::path behaviors_path;
  std::filesystem::path templates_path;  // empty: built-in templates
  BackendConfig backend;
  ChainConfig chain;
  EvalConfig eval;
  std::size_t leaf_cap = kDefaultLeafCap;  // cap for trees built by build-tree and recommend
  std::filesystem::path output_dir = "runs";

  static AppConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static AppConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Size and range checks. Throws ConfigError.
  void validate() const;
  // Throws ConfigError when a path the command needs is unset or missing.
  void require_catalog() const;
  void require_behaviors() const;
};

CatalogFormat parse_catalog_format(std::string_view name);  // throws ConfigError
std::string_view to_string(CatalogFormat f) noexcept;

}  // namespace treerec
