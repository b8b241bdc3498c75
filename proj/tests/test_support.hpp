#pragma once

#include <random>

#include "codedcache/cache_core.hpp"
#include "codedcache/policy.hpp"

namespace codedcache::testing {

// Random instance with K in [1, max_users], F in [1, max_bits], N in [K, K+2],
// M in [0, N], random placement and distinct demands (not pruned).
struct RandomProblem {
  ProblemInstance instance;
  CacheMatrix cache;
  DemandVector demands;
};

inline RandomProblem random_problem(Rng& rng, int max_users, int max_bits) {
  std::uniform_int_distribution<int> users(1, max_users);
  std::uniform_int_distribution<int> bits(1, max_bits);
  RandomProblem p;
  p.instance.num_users = users(rng);
  p.instance.file_bits = bits(rng);
  p.instance.num_files = p.instance.num_users + std::uniform_int_distribution<int>(0, 2)(rng);
  p.instance.cache_files = std::uniform_int_distribution<int>(0, p.instance.num_files)(rng);
  p.cache = random_prefetch(p.instance, rng);
  p.demands = random_distinct_demands(p.instance, rng);
  return p;
}

inline EpisodeSpec pruned(const RandomProblem& p) {
  auto r = prune_to_requested(p.instance, p.cache, p.demands);
  return EpisodeSpec{r.instance, r.cache, r.demands};
}

// Forced-coding fixture: K = N = 2, M = 1, F = 2, demands (0, 1).
inline EpisodeSpec forced_coding_spec() {
  const ProblemInstance inst{2, 2, 2, 1};
  return EpisodeSpec{inst, mn_prefetch(inst), {0, 1}};
}

}  // namespace codedcache::testing
