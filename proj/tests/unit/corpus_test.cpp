#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "treerec/corpus.hpp"
#include "treerec/error.hpp"
#include "treerec/rng.hpp"
#include "treerec/synthetic.hpp"
#include "treerec/text.hpp"

using namespace treerec;

namespace {

std::vector<std::string> seq(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

TEST(MindCatalog, MapsColumns) {
  std::istringstream in("N1\tsports\tfootball_nfl\tGarrett banned\n");
  const auto loaded = parse_mind_catalog(in);
  ASSERT_EQ(loaded.records.size(), 1u);
  const auto& item = loaded.records[0];
  EXPECT_EQ(item.id, "N1");
  EXPECT_EQ(item.title, "Garrett banned");
  EXPECT_EQ(item.semantic_path, (std::vector<std::string>{"sports", "football_nfl"}));
  EXPECT_FALSE(item.description.has_value());
}

TEST(MindCatalog, SkipsMalformedAndDuplicateRows) {
  std::istringstream in(
      "N1\tsports\tnfl\tA\n"
      "N2\tsports\n"
      "N1\tnews\tus\tB\n"
      "\n"
      "N3\tnews\tus\tC\tabstract\turl\t[]\t[]\n");
  const auto loaded = parse_mind_catalog(in);
  EXPECT_EQ(loaded.records.size(), 2u);
  EXPECT_EQ(loaded.skipped, 2u);
  EXPECT_EQ(loaded.records[1].id, "N3");
}

TEST(MindCatalog, NoValidRowIsEmptyCatalog) {
  std::istringstream in("garbage\n\n");
  EXPECT_THROW(parse_mind_catalog(in), EmptyCatalog);
}

TEST(MindCatalog, RandomSampleCountsMatchLineScan) {
  SyntheticSpec spec;
  spec.categories = 8;
  spec.total_items = 500;
  spec.min_subcategories = 2;
  spec.max_subcategories = 3;
  spec.min_leaf = 10;
  spec.max_leaf = 50;
  const auto items = make_synthetic_catalog(spec);
  std::stringstream buf;
  write_mind_news(buf, items);
  const std::string text = buf.str();

  std::set<std::string> ids;
  std::istringstream scan(text);
  for (std::string line; std::getline(scan, line);) ids.insert(line.substr(0, line.find('\t')));

  std::istringstream in(text);
  const auto loaded = parse_mind_catalog(in);
  EXPECT_EQ(ids.size(), 500u);
  EXPECT_EQ(loaded.records.size(), ids.size());
  for (const auto& item : loaded.records) EXPECT_EQ(item.semantic_path.size(), 2u);
}

TEST(CatalogRecords, VariableDepth) {
  std::istringstream in(
      R"({"id":"B1","title":"Saving Private Ryan","path":["Movies","Drama","War","WWII"]})"
      "\n"
      R"({"id":"B2","title":"Up","semantic_path":["Movies","Animation"],"description":"A house flies."})"
      "\n");
  const auto loaded = parse_catalog_records(in);
  ASSERT_EQ(loaded.records.size(), 2u);
  EXPECT_EQ(loaded.records[0].semantic_path.size(), 4u);
  EXPECT_EQ(loaded.records[1].description, "A house flies.");
}

TEST(CatalogRecords, SkipsRecordsWithoutIdOrPath) {
  std::istringstream in(
      R"({"id":"B1","title":"x","path":[]})"
      "\n"
      R"({"title":"y","path":["a"]})"
      "\n"
      R"({"id":"B3","title":"z","path":["a",""]})"
      "\n"
      "not json\n"
      R"({"id":"B4","title":"ok","path":["a"]})"
      "\n");
  const auto loaded = parse_catalog_records(in);
  ASSERT_EQ(loaded.records.size(), 1u);
  EXPECT_EQ(loaded.records[0].id, "B4");
  EXPECT_EQ(loaded.skipped, 4u);
}

TEST(CatalogRecords, SyntheticFileOf6176Records) {
  const auto path = std::filesystem::temp_directory_path() / "treerec_records_6176.jsonl";
  {
    std::ofstream out(path);
    for (int i = 0; i < 6176; ++i) {
      out << R"({"id":"A)" << i << R"(","title":"product )" << i << R"(","semantic_path":["Books","Genre)" << i % 19
          << R"(","Sub)" << i % 7 << "\"]}\n";
    }
  }
  const auto loaded = load_catalog_records(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.records.size(), 6176u);
  EXPECT_EQ(loaded.skipped, 0u);
}

TEST(Behaviors, ParsesImpressionRow) {
  std::istringstream in("1\tU1\tt\tN1 N2\tN3-1 N4-0\n");
  const auto loaded = parse_behaviors(in);
  ASSERT_EQ(loaded.records.size(), 1u);
  const auto& row = loaded.records[0];
  EXPECT_EQ(row.user_id, "U1");
  EXPECT_EQ(row.history, (std::vector<std::string>{"N1", "N2"}));
  EXPECT_EQ(row.positives, (std::vector<std::string>{"N3"}));
  EXPECT_EQ(row.candidates, (std::vector<std::string>{"N3", "N4"}));
}

TEST(Behaviors, SkipsEmptyAndMalformedRows) {
  std::istringstream in(
      "1\tU1\tt\t\t\n"
      "2\tU2\tt\tN1\tN3-7\n"
      "3\tU3\tt\tN1\t\n"
      "4\tU4\n");
  const auto loaded = parse_behaviors(in);
  ASSERT_EQ(loaded.records.size(), 1u);
  EXPECT_EQ(loaded.records[0].user_id, "U3");
  EXPECT_EQ(loaded.skipped, 3u);
}

TEST(Behaviors, PositivesSubsetOfCandidatesOnRandomFiles) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.users = 30;
    const auto world = make_synthetic_world(spec);
    std::stringstream buf;
    write_mind_behaviors(buf, world.interactions);
    const std::string text = buf.str();

    std::istringstream in(text);
    const auto loaded = parse_behaviors(in);
    ASSERT_EQ(loaded.records.size(), world.interactions.size());

    std::istringstream scan(text);
    std::size_t row = 0;
    for (std::string line; std::getline(scan, line); ++row) {
      const auto fields = text::split(line, '\t');
      std::vector<std::string> clicked;
      for (auto tok : text::whitespace_units(fields[4])) {
        if (tok.substr(tok.size() - 2) == "-1") clicked.emplace_back(tok.substr(0, tok.size() - 2));
      }
      const auto& got = loaded.records[row];
      EXPECT_EQ(got.positives, clicked);
      for (const auto& p : got.positives) {
        EXPECT_NE(std::find(got.candidates.begin(), got.candidates.end(), p), got.candidates.end());
      }
    }
  }
}

TEST(TruncateHistory, ShortHistoryUnchanged) {
  Interaction row{"U", seq("a", 26), {}, {}};
  EXPECT_EQ(truncate_history(row), row);
}

TEST(TruncateHistory, KeepsMostRecentSuffix) {
  Interaction row{"U", seq("h", 60), {}, {}};
  const auto cut = truncate_history(row, 50);
  ASSERT_EQ(cut.history.size(), 50u);
  EXPECT_EQ(cut.history.front(), "h10");
  EXPECT_EQ(cut.history.back(), "h59");
  Interaction long_row{"U", seq("h", 80), {}, {}};
  EXPECT_EQ(truncate_history(long_row).history.front(), "h30");
}

TEST(TruncateHistory, SuffixAndIdempotentOnRandomHistories) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    Interaction row{"U", seq("x", uniform_index(rng, 120)), {}, {}};
    const auto max = 1 + uniform_index(rng, 70);
    const auto once = truncate_history(row, max);
    ASSERT_LE(once.history.size(), max);
    ASSERT_TRUE(std::equal(once.history.begin(), once.history.end(),
                           row.history.end() - static_cast<std::ptrdiff_t>(once.history.size())));
    EXPECT_EQ(truncate_history(once, max), once);
  }
}

TEST(TruncateHistory, ZeroMaxRejected) {
  EXPECT_THROW(truncate_history(Interaction{}, 0), std::invalid_argument);
}

TEST(Catalog, IndexesById) {
  Catalog c({{"a", "A", {"x"}, std::nullopt}, {"b", "B", {"y"}, std::nullopt}});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.at("b").title, "B");
  EXPECT_EQ(c.find("zzz"), nullptr);
  EXPECT_THROW(c.at("zzz"), DataError);
  EXPECT_THROW(Catalog({{"a", "A", {"x"}, std::nullopt}, {"a", "B", {"y"}, std::nullopt}}), DataError);
}

TEST(Catalog, ResolveDropsUnknownIds) {
  Catalog c({{"a", "A", {"x"}, std::nullopt}, {"b", "B", {"y"}, std::nullopt}});
  std::vector<Interaction> rows{{"U", {"a", "ghost", "b"}, {"b", "phantom"}, {"b", "phantom", "a"}}};
  const auto stats = resolve_against(c, rows);
  EXPECT_EQ(stats.dropped_history, 1u);
  EXPECT_EQ(stats.dropped_positives, 1u);
  EXPECT_EQ(stats.dropped_candidates, 1u);
  EXPECT_EQ(rows[0].history, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(rows[0].positives, (std::vector<std::string>{"b"}));
}
