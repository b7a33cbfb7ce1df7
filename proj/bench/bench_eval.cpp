#include <benchmark/benchmark.h>

#include "treerec/eval.hpp"
#include "treerec/metrics.hpp"
#include "treerec/mock_backend.hpp"
#include "treerec/rng.hpp"
#include "treerec/synthetic.hpp"

using namespace treerec;

namespace {

std::vector<RankingCase> ranking_cases(std::size_t count) {
  Rng rng(11);
  std::vector<RankingCase> cases(count);
  for (auto& c : cases) {
    for (auto i : sample_indices(rng, 2000, 100)) c.ranked.push_back("N" + std::to_string(i));
    for (auto i : sample_indices(rng, 2000, 5)) c.relevant.insert("N" + std::to_string(i));
  }
  return cases;
}

struct World {
  SyntheticWorld world;
  Catalog catalog;
  TemplateSet templates = TemplateSet::defaults();
  MockBackend mock;

  World()
      : world(make_synthetic_world([] {
          SyntheticSpec spec;
          spec.users = 200;
          return spec;
        }())),
        catalog(world.items),
        mock(MockBackend::from_catalog(catalog, templates)) {}
};

const World& shared_world() {
  static const World w;
  return w;
}

void BM_ScoreRankingsSerial(benchmark::State& state) {
  const auto cases = ranking_cases(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(score_rankings_serial(cases, 20));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScoreRankingsSerial)->Arg(10000);

void BM_ScoreRankingsParallel(benchmark::State& state) {
  const auto cases = ranking_cases(10000);
  const auto threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(score_rankings(cases, 20, threads));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_ScoreRankingsParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime();

void BM_EvaluateSerial(benchmark::State& state) {
  const auto& w = shared_world();
  EvalConfig eval;
  eval.test_users = 100;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_serial(w.catalog, w.world.interactions, ChainConfig{}, eval, w.mock, w.templates));
  }
}
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMillisecond);

void BM_EvaluateParallel(benchmark::State& state) {
  const auto& w = shared_world();
  EvalConfig eval;
  eval.test_users = 100;
  eval.parallelism = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate(w.catalog, w.world.interactions, ChainConfig{}, eval, w.mock, w.templates));
  }
}
BENCHMARK(BM_EvaluateParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
