#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace treerec {

using IdSet = std::unordered_set<std::string>;

// |top-K(ranked) ∩ relevant| / |relevant|; nullopt when relevant is empty.
std::optional<double> recall_at_k(std::span<const std::string> ranked, const IdSet& relevant, std::size_t cutoff);

// Binary-gain NDCG with the 1/log2(rank + 1) discount; nullopt when relevant is empty.
std::optional<double> ndcg_at_k(std::span<const std::string> ranked, const IdSet& relevant, std::size_t cutoff);

struct RankingCase {
  std::vector<std::string> ranked;
  IdSet relevant;
};

struct RankingScore {
  std::optional<double> recall;
  std::optional<double> ndcg;
};

// Scores every case. The parallel kernel splits cases over `threads` OpenMP
// threads; the serial one is the reference it is tested against.
std::vector<RankingScore> score_rankings(std::span<const RankingCase> cases, std::size_t cutoff,
                                         std::size_t threads);
std::vector<RankingScore> score_rankings_serial(std::span<const RankingCase> cases, std::size_t cutoff);

struct MeanScore {
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t scored = 0;    // cases with a defined value
  std::size_t excluded = 0;  // cases with an empty relevant set
};

MeanScore mean_scores(std::span<const RankingScore> scores);

}  // namespace treerec
