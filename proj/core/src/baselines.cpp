#include "codedcache/baselines.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>

namespace codedcache {

SideInfoGraph::SideInfoGraph(std::vector<SideInfoVertex> vertices)
    : vertices_(std::move(vertices)), adj_(vertices_.size() * vertices_.size(), 0) {}

void SideInfoGraph::connect(int a, int b) {
  if (a == b) return;
  adj_[index(a, b)] = 1;
  adj_[index(b, a)] = 1;
}

int SideInfoGraph::edge_count() const {
  return static_cast<int>(std::count(adj_.begin(), adj_.end(), std::uint8_t{1})) / 2;
}

int SideInfoGraph::degree(int v) const {
  int d = 0;
  for (int u = 0; u < size(); ++u) d += adjacent(v, u) ? 1 : 0;
  return d;
}

Schedule uncoded_delivery(const ProblemInstance& instance, const CacheMatrix& cache,
                          const DemandVector& demands) {
  const auto requests = outstanding_bits(instance, cache, demands);
  Schedule s;
  for (int b = 0; b < requests.rows(); ++b) {
    if (requests.row_any(b)) s.packets.push_back(CodedPacket({b}));
  }
  return s;
}

Schedule gcm_delivery(const ProblemInstance& instance, const CacheMatrix& cache,
                      const DemandVector& demands) {
  validate_demands(instance, demands, true);
  const int k = instance.num_users;
  if (k > 30) throw ConfigError("gcm_delivery supports at most 30 users");
  const auto requests = outstanding_bits(instance, cache, demands);

  // groups[S][user] = V_{user, S \ {user}}, ascending bit order.
  std::map<std::uint32_t, std::map<int, std::vector<int>>> groups;
  for (int b = 0; b < requests.rows(); ++b) {
    for (int user = 0; user < k; ++user) {
      if (!requests(b, user)) continue;
      std::uint32_t subset = 1u << user;
      for (int other = 0; other < k; ++other) {
        if (other != user && cache(b, other)) subset |= 1u << other;
      }
      groups[subset][user].push_back(b);
    }
  }

  std::vector<std::uint32_t> order;
  for (const auto& [subset, _] : groups) order.push_back(subset);
  std::stable_sort(order.begin(), order.end(), [](std::uint32_t a, std::uint32_t b) {
    return std::popcount(a) > std::popcount(b);
  });

  Schedule s;
  for (std::uint32_t subset : order) {
    const auto& members = groups[subset];
    std::size_t longest = 0;
    for (const auto& [_, bits] : members) longest = std::max(longest, bits.size());
    for (std::size_t pos = 0; pos < longest; ++pos) {
      std::vector<int> packet;
      for (const auto& [_, bits] : members) {
        if (pos < bits.size()) packet.push_back(bits[pos]);
      }
      s.packets.emplace_back(std::move(packet));
    }
  }
  return s;
}

SideInfoGraph build_side_info_graph(const ProblemInstance& instance, const CacheMatrix& cache,
                                    const RequestMatrix& requests) {
  std::vector<SideInfoVertex> vertices;
  for (int user = 0; user < instance.num_users; ++user) {
    for (int b = 0; b < requests.rows(); ++b) {
      if (requests(b, user)) vertices.push_back(SideInfoVertex{user, b});
    }
  }
  SideInfoGraph g(std::move(vertices));
  const auto& v = g.vertices();
  for (int a = 0; a < g.size(); ++a) {
    for (int b = a + 1; b < g.size(); ++b) {
      if (v[a].user == v[b].user) continue;
      const bool same_bit = v[a].bit == v[b].bit;
      const bool exchangeable = cache(v[b].bit, v[a].user) && cache(v[a].bit, v[b].user);
      if (same_bit || exchangeable) g.connect(a, b);
    }
  }
  return g;
}

CodedPacket clique_packet(const SideInfoGraph& graph, const std::vector<int>& clique) {
  std::vector<int> bits;
  bits.reserve(clique.size());
  for (int v : clique) bits.push_back(graph.vertices()[v].bit);
  return CodedPacket(std::move(bits));
}

std::vector<std::vector<int>> greedy_clique_partition(const SideInfoGraph& graph) {
  const int n = graph.size();
  std::vector<char> covered(n, 0);
  std::vector<std::vector<int>> cliques;
  int remaining = n;
  while (remaining > 0) {
    const int seed = static_cast<int>(std::find(covered.begin(), covered.end(), 0) - covered.begin());
    std::vector<int> clique{seed};
    covered[seed] = 1;
    --remaining;

    std::vector<int> candidates;
    for (int u = 0; u < n; ++u) {
      if (!covered[u] && graph.adjacent(seed, u)) candidates.push_back(u);
    }
    while (!candidates.empty()) {
      int best = -1;
      int best_score = -1;
      for (int c : candidates) {
        int score = 0;
        for (int u = 0; u < n; ++u) {
          if (!covered[u] && u != c && graph.adjacent(c, u)) ++score;
        }
        if (score > best_score) {
          best = c;
          best_score = score;
        }
      }
      clique.push_back(best);
      covered[best] = 1;
      --remaining;
      std::erase_if(candidates, [&](int c) { return c == best || !graph.adjacent(best, c); });
    }
    cliques.push_back(std::move(clique));
  }
  return cliques;
}

Schedule greedy_clique_cover(const SideInfoGraph& graph) {
  Schedule s;
  for (const auto& clique : greedy_clique_partition(graph)) {
    s.packets.push_back(clique_packet(graph, clique));
  }
  return s;
}

namespace {

class CliquePartitionSearch {
 public:
  explicit CliquePartitionSearch(const SideInfoGraph& graph) : n_(graph.size()) {
    neighbors_.assign(n_, 0);
    for (int a = 0; a < n_; ++a) {
      for (int b = 0; b < n_; ++b) {
        if (graph.adjacent(a, b)) neighbors_[a] |= std::uint64_t{1} << b;
      }
    }
    best_count_ = n_ + 1;
  }

  std::vector<std::vector<int>> solve() {
    std::vector<std::uint64_t> cliques;
    cliques.reserve(n_);
    search(0, cliques);
    std::vector<std::vector<int>> out;
    for (std::uint64_t mask : best_) {
      std::vector<int> members;
      for (int v = 0; v < n_; ++v) {
        if (mask & (std::uint64_t{1} << v)) members.push_back(v);
      }
      out.push_back(std::move(members));
    }
    return out;
  }

 private:
  // Vertices 0..v-1 are placed; place v into an existing clique or a new one.
  void search(int v, std::vector<std::uint64_t>& cliques) {
    if (static_cast<int>(cliques.size()) >= best_count_) return;
    if (v == n_) {
      best_count_ = static_cast<int>(cliques.size());
      best_ = cliques;
      return;
    }
    const std::uint64_t bit = std::uint64_t{1} << v;
    for (auto& clique : cliques) {
      if ((neighbors_[v] & clique) == clique) {
        clique |= bit;
        search(v + 1, cliques);
        clique &= ~bit;
      }
    }
    if (static_cast<int>(cliques.size()) + 1 < best_count_) {
      cliques.push_back(bit);
      search(v + 1, cliques);
      cliques.pop_back();
    }
  }

  int n_;
  std::vector<std::uint64_t> neighbors_;
  int best_count_;
  std::vector<std::uint64_t> best_;
};

}  // namespace

std::optional<std::vector<std::vector<int>>> exact_clique_partition(const SideInfoGraph& graph,
                                                                    int vertex_budget) {
  if (graph.size() > vertex_budget || graph.size() > 64) return std::nullopt;
  return CliquePartitionSearch(graph).solve();
}

std::optional<Schedule> exact_min_clique_cover(const SideInfoGraph& graph, int vertex_budget) {
  auto partition = exact_clique_partition(graph, vertex_budget);
  if (!partition) return std::nullopt;
  Schedule s;
  for (const auto& clique : *partition) s.packets.push_back(clique_packet(graph, clique));
  return s;
}

ReplayResult replay_schedule(const ProblemInstance& instance, const CacheMatrix& cache,
                             const DemandVector& demands, const Schedule& schedule) {
  auto requests = outstanding_bits(instance, cache, demands);
  BitMatrix delivered(instance.total_bits(), instance.num_users);
  ReplayResult r;
  for (const auto& packet : schedule.packets) {
    for (int b : packet.bits) {
      if (b < 0 || b >= instance.total_bits()) return r;
    }
    r.delivered_count += static_cast<int>(broadcast(cache, requests, delivered, packet).size());
  }
  r.outstanding = requests.count();
  r.valid = r.outstanding == 0;
  return r;
}

std::vector<TraceRecord> schedule_trace(const ProblemInstance& instance,
                                        const CacheMatrix& cache, const DemandVector& demands,
                                        const Schedule& schedule, Rng& rng) {
  const int cap = std::max<int>(kDefaultEpisodeCap, static_cast<int>(schedule.size()));
  auto state = reset(instance, cache, demands, rng, cap);
  std::vector<TraceRecord> records;
  for (const auto& packet : schedule.packets) {
    if (state.done()) break;
    auto outcome = step(state, Action{packet.bits}, rng);
    records.push_back(TraceRecord{state.t, outcome.packet, outcome.deliveries,
                                  outcome.delivered_count, outcome.reward});
  }
  return records;
}

}  // namespace codedcache
