#pragma once

// Episodic delivery-phase environment. One step = one broadcast XOR bit.
//
// Observation layout (length 3*N*K*F, entries 0/1): the cache matrix, the
// requests matrix and the next-bit matrix, each NF x K flattened row-major
// (index = bit * K + user), concatenated in that order.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "codedcache/cache_core.hpp"

namespace codedcache {

inline constexpr int kDefaultEpisodeCap = 100;

struct Delivery {
  int user = 0;
  int bit = 0;
  friend auto operator<=>(const Delivery&, const Delivery&) = default;
};

/// Bits selected for XOR-ing into the next broadcast.
struct Action {
  std::vector<int> selected;

  static Action from_mask(std::span<const std::uint8_t> mask);
};

struct EnvState {
  ProblemInstance instance;
  CacheMatrix cache;
  DemandVector demands;
  RequestMatrix requests;
  BitMatrix delivered;
  std::optional<int> next_bit;
  int t = 0;
  int episode_cap = kDefaultEpisodeCap;
  int initial_outstanding = 0;

  bool complete() const { return !requests.any(); }
  bool done() const { return complete() || t >= episode_cap; }
};

struct StepOutcome {
  std::vector<Delivery> deliveries;
  int delivered_count = 0;  // B
  double reward = 0.0;
  bool done = false;
  CodedPacket packet;
};

struct TransmissionLog {
  std::vector<CodedPacket> packets;
};

/// Broadcasts one packet: every user decodes against knowledge = cache plus
/// previously delivered bits; successes are cleared from `requests` and set
/// in `delivered`. Returned deliveries are ordered by user.
std::vector<Delivery> broadcast(const CacheMatrix& cache, RequestMatrix& requests,
                                BitMatrix& delivered, const CodedPacket& packet);

/// Starts an episode. Demands must be distinct.
EnvState reset(const ProblemInstance& instance, const CacheMatrix& cache,
               const DemandVector& demands, Rng& rng, int episode_cap = kDefaultEpisodeCap);

/// Uniform over bits (rows) that are still owed to at least one user.
std::optional<int> select_next_bit(const EnvState& state, Rng& rng);

std::vector<double> observe(const EnvState& state);
/// Writes the observation into `out`, which must hold 3*N*K*F entries.
void observe_into(const EnvState& state, std::span<double> out);
inline int observation_size(const ProblemInstance& p) {
  return 3 * p.total_bits() * p.num_users;
}
inline int action_size(const ProblemInstance& p) { return p.total_bits(); }

/// Reward is log2(B) when the next bit reached at least one user needing it,
/// -1 otherwise. Throws UsageError once the episode is done.
StepOutcome step(EnvState& state, const Action& action, Rng& rng);

struct DelayResult {
  double delay = 0.0;
  bool capped = false;
  int fallback_bits = 0;
};

/// t/F for finished episodes. A capped episode is completed by uncoded
/// fallback: (t + remaining owed (user, bit) pairs) / F, flagged as capped.
DelayResult normalized_delay(const EnvState& state);

// Line-delimited JSON trace: one object per step with keys
// "t", "packet", "deliveries" ([[user, bit], ...]), "B" and "reward".
struct TraceRecord {
  int t = 0;
  CodedPacket packet;
  std::vector<Delivery> deliveries;
  int delivered_count = 0;
  double reward = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

std::string to_trace_line(const TraceRecord& record);
TraceRecord parse_trace_line(const std::string& line);
void write_trace(std::ostream& out, const std::vector<TraceRecord>& records);
std::vector<TraceRecord> read_trace(std::istream& in);

}  // namespace codedcache
