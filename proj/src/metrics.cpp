#include "treerec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace treerec {
namespace {

void check_cutoff(std::size_t cutoff) {
  if (cutoff == 0) throw std::invalid_argument("metric cutoff K must be >= 1");
}

}  // namespace

std::optional<double> recall_at_k(std::span<const std::string> ranked, const IdSet& relevant, std::size_t cutoff) {
  check_cutoff(cutoff);
  if (relevant.empty()) return std::nullopt;
  const auto top = std::min(cutoff, ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += relevant.count(ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

std::optional<double> ndcg_at_k(std::span<const std::string> ranked, const IdSet& relevant, std::size_t cutoff) {
  check_cutoff(cutoff);
  if (relevant.empty()) return std::nullopt;
  const auto top = std::min(cutoff, ranked.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < top; ++i) {
    if (relevant.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  const auto ideal = std::min(relevant.size(), cutoff);
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

std::vector<RankingScore> score_rankings_serial(std::span<const RankingCase> cases, std::size_t cutoff) {
  check_cutoff(cutoff);
  std::vector<RankingScore> out(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    out[i] = {recall_at_k(cases[i].ranked, cases[i].relevant, cutoff),
              ndcg_at_k(cases[i].ranked, cases[i].relevant, cutoff)};
  }
  return out;
}

std::vector<RankingScore> score_rankings(std::span<const RankingCase> cases, std::size_t cutoff,
                                         std::size_t threads) {
  check_cutoff(cutoff);
  std::vector<RankingScore> out(cases.size());
  const auto count = static_cast<std::ptrdiff_t>(cases.size());
#pragma omp parallel for schedule(static) num_threads(static_cast<int>(std::max<std::size_t>(threads, 1)))
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto& c = cases[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {recall_at_k(c.ranked, c.relevant, cutoff),
                                        ndcg_at_k(c.ranked, c.relevant, cutoff)};
  }
  return out;
}

MeanScore mean_scores(std::span<const RankingScore> scores) {
  MeanScore mean;
  // Recall and NDCG are defined for exactly the same cases.
  for (const auto& s : scores) {
    if (!s.recall || !s.ndcg) {
      ++mean.excluded;
      continue;
    }
    mean.recall += *s.recall;
    mean.ndcg += *s.ndcg;
    ++mean.scored;
  }
  if (mean.scored > 0) {
    mean.recall /= static_cast<double>(mean.scored);
    mean.ndcg /= static_cast<double>(mean.scored);
  }
  return mean;
}

}  // namespace treerec
