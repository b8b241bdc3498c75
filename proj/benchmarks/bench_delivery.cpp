// Inference cost versus number of users at F = 2, M = 3 (N = K after pruning).

#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "codedcache/baselines.hpp"
#include "codedcache/policy.hpp"

namespace {

using namespace codedcache;

constexpr int kFileBits = 2;
constexpr int kCacheFiles = 3;
constexpr int kInstances = 16;

std::vector<EpisodeSpec> instances(int k) {
  const ProblemInstance inst{k, k, kFileBits, std::min(kCacheFiles, k)};
  const auto sampler = random_instance_sampler(inst);
  Rng rng(static_cast<std::uint64_t>(k) * 1000 + 7);
  std::vector<EpisodeSpec> out;
  for (int i = 0; i < kInstances; ++i) out.push_back(sampler(rng));
  return out;
}

SideInfoGraph graph_of(const EpisodeSpec& e) {
  return build_side_info_graph(e.instance, e.cache,
                               outstanding_bits(e.instance, e.cache, e.demands));
}

void BM_AgentEpisode(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const auto specs = instances(k);
  Rng init(1);
  const auto params = init_params(k, k, kFileBits, init);
  Rng rng(2);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        run_episode(params, specs[i++ % specs.size()], EvalMode::kGreedy, rng));
  }
}

void BM_GreedyCover(benchmark::State& state) {
  const auto specs = instances(static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_clique_cover(graph_of(specs[i++ % specs.size()])));
  }
}

// Budget raised to the 64-vertex hard limit so larger K are measured at all.
void BM_ExactCover(benchmark::State& state) {
  const auto specs = instances(static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_min_clique_cover(graph_of(specs[i++ % specs.size()]), 64));
  }
}

}  // namespace

BENCHMARK(BM_AgentEpisode)->DenseRange(5, 10)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_GreedyCover)->DenseRange(5, 10)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ExactCover)->DenseRange(5, 10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
