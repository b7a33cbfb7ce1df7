#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "treerec/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic MIND-format dataset", "make_sample_data"};
  treerec::SyntheticSpec spec;
  std::string out_dir = "data/sample";
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  app.add_option("--categories", spec.categories, "number of categories")->capture_default_str();
  app.add_option("--users", spec.users, "number of users")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto world = treerec::make_synthetic_world(spec);
    std::filesystem::create_directories(out_dir);
    std::ofstream news(std::filesystem::path(out_dir) / "news.tsv", std::ios::binary);
    std::ofstream behaviors(std::filesystem::path(out_dir) / "behaviors.tsv", std::ios::binary);
    treerec::write_mind_news(news, world.items);
    treerec::write_mind_behaviors(behaviors, world.interactions);
    if (!news || !behaviors) {
      std::cerr << "cannot write to " << out_dir << '\n';
      return 1;
    }
    std::cout << world.items.size() << " items, " << world.interactions.size() << " users written to " << out_dir
              << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
