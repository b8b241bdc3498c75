#pragma once

// Non-learning delivery algorithms. Each produces a whole Schedule up front
// from the initial caches; replay_schedule checks it with the same decode
// semantics the environment uses.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "codedcache/cache_core.hpp"
#include "codedcache/delivery_env.hpp"

namespace codedcache {

inline constexpr int kDefaultVertexBudget = 14;

struct Schedule {
  std::vector<CodedPacket> packets;
  std::size_t size() const { return packets.size(); }
};

struct SideInfoVertex {
  int user = 0;
  int bit = 0;
  friend auto operator<=>(const SideInfoVertex&, const SideInfoVertex&) = default;
};

/// Vertices are owed (user, bit) pairs in ascending (user, bit) order. Two
/// vertices of different users are adjacent when they want the same bit or
/// each user already holds the other's bit; same-user vertices never are.
class SideInfoGraph {
 public:
  SideInfoGraph() = default;
  explicit SideInfoGraph(std::vector<SideInfoVertex> vertices);

  int size() const { return static_cast<int>(vertices_.size()); }
  const std::vector<SideInfoVertex>& vertices() const { return vertices_; }
  bool adjacent(int a, int b) const { return adj_[index(a, b)] != 0; }
  void connect(int a, int b);
  int edge_count() const;
  int degree(int v) const;

 private:
  std::size_t index(int a, int b) const {
    return static_cast<std::size_t>(a) * vertices_.size() + b;
  }

  std::vector<SideInfoVertex> vertices_;
  std::vector<std::uint8_t> adj_;
};

/// One singleton packet per owed bit, ascending global bit order.
Schedule uncoded_delivery(const ProblemInstance& instance, const CacheMatrix& cache,
                          const DemandVector& demands);

/// Subset-enumeration coded multicast for arbitrary placements: owed bits are
/// grouped by the exact set of other users caching them, and for every user
/// subset S (largest first) the groups V_{k, S\{k}}, k in S, are XOR-ed
/// position by position (shorter groups are zero-padded).
Schedule gcm_delivery(const ProblemInstance& instance, const CacheMatrix& cache,
                      const DemandVector& demands);

SideInfoGraph build_side_info_graph(const ProblemInstance& instance, const CacheMatrix& cache,
                                    const RequestMatrix& requests);

/// Clique -> packet holding the distinct bits of its vertices.
CodedPacket clique_packet(const SideInfoGraph& graph, const std::vector<int>& clique);

/// Greedy maximal-clique extraction from the lowest uncovered vertex.
std::vector<std::vector<int>> greedy_clique_partition(const SideInfoGraph& graph);
Schedule greedy_clique_cover(const SideInfoGraph& graph);

/// Exact minimum clique partition by branch and bound. Returns nullopt when
/// the graph has more than `vertex_budget` vertices.
std::optional<std::vector<std::vector<int>>> exact_clique_partition(
    const SideInfoGraph& graph, int vertex_budget = kDefaultVertexBudget);
std::optional<Schedule> exact_min_clique_cover(const SideInfoGraph& graph,
                                               int vertex_budget = kDefaultVertexBudget);

struct ReplayResult {
  bool valid = false;
  int delivered_count = 0;
  int outstanding = 0;
};

/// Replays packets in order with accumulating knowledge; valid iff every
/// owed (user, bit) pair has been delivered at the end.
ReplayResult replay_schedule(const ProblemInstance& instance, const CacheMatrix& cache,
                             const DemandVector& demands, const Schedule& schedule);

inline double schedule_delay(const Schedule& schedule, int file_bits) {
  return static_cast<double>(schedule.size()) / file_bits;
}

/// Trace records for a schedule replayed through the environment (rewards
/// depend on the next-bit draws of `rng`).
std::vector<TraceRecord> schedule_trace(const ProblemInstance& instance,
                                        const CacheMatrix& cache, const DemandVector& demands,
                                        const Schedule& schedule, Rng& rng);

}  // namespace codedcache
