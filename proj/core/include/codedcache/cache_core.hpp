#pragma once

// Bit-level data model of a cache-aided broadcast network: a library of
// N files of F bits each, K users with caches of M files, and the
// single-packet XOR decoding primitive used by every delivery algorithm.
//
// Global bit indices run over [0, N*F): bit `offset` of file `n` has global
// index n*F + offset. Matrices are NF x K with rows indexed by global bit and
// columns by user.

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace codedcache {

using Rng = std::mt19937_64;

/// Invalid configuration or dimensions (bad N/K/F/M, divisibility, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was called in a state where it is not allowed.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ProblemInstance {
  int num_files = 1;    // N
  int num_users = 1;    // K
  int file_bits = 1;    // F
  int cache_files = 0;  // M

  /// Throws ConfigError unless N >= 1, K >= 1, F >= 1 and 0 <= M <= N.
  void validate() const;

  int total_bits() const { return num_files * file_bits; }
  int cache_bits() const { return cache_files * file_bits; }

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

struct BitId {
  int file = 0;
  int offset = 0;

  int global(int file_bits) const { return file * file_bits + offset; }
  static BitId from_global(int global, int file_bits) {
    return BitId{global / file_bits, global % file_bits};
  }

  friend auto operator<=>(const BitId&, const BitId&) = default;
};

/// Dense row-major binary matrix.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  bool operator()(int r, int c) const { return data_[index(r, c)] != 0; }
  void set(int r, int c, bool value = true) { data_[index(r, c)] = value ? 1 : 0; }

  bool row_any(int r) const;
  int col_count(int c) const;
  int count() const;
  bool any() const { return count() > 0; }

  std::span<const std::uint8_t> data() const { return data_; }

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols_ + c; }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Entry (b, i) set iff user i caches global bit b.
using CacheMatrix = BitMatrix;
/// Entry (b, i) set iff bit b is still owed to user i.
using RequestMatrix = BitMatrix;
/// d_i for each user i.
using DemandVector = std::vector<int>;

/// A broadcast bit: the XOR of the listed global bits (kept sorted, unique).
struct CodedPacket {
  std::vector<int> bits;

  CodedPacket() = default;
  explicit CodedPacket(std::vector<int> b);

  bool empty() const { return bits.empty(); }
  std::size_t size() const { return bits.size(); }

  friend bool operator==(const CodedPacket&, const CodedPacket&) = default;
};

/// Each user caches a uniformly random M*F-subset of the library bits,
/// independently across users.
CacheMatrix random_prefetch(const ProblemInstance& instance, Rng& rng);

/// Deterministic segment placement for N == K: every file is split into K
/// equal segments and user i caches segments i, i+1, ..., i+M-1 (mod K) of
/// every file. Throws ConfigError when N != K or K does not divide F.
CacheMatrix mn_prefetch(const ProblemInstance& instance);

/// Throws ConfigError on out-of-range demands or a length mismatch.
void validate_demands(const ProblemInstance& instance, const DemandVector& demands,
                      bool require_distinct);

/// D_i = W_{d_i} \ C_i for every user.
RequestMatrix outstanding_bits(const ProblemInstance& instance, const CacheMatrix& cache,
                               const DemandVector& demands);

/// Single-packet decoding: a user cancels every bit it knows from the XOR and
/// recovers the one that remains, if exactly one remains and it is owed.
template <class KnownFn, class NeededFn>
std::optional<int> decode(std::span<const int> packet, KnownFn&& known, NeededFn&& needed) {
  std::optional<int> unknown;
  for (int bit : packet) {
    if (known(bit)) continue;
    if (unknown) return std::nullopt;
    unknown = bit;
  }
  if (unknown && needed(*unknown)) return unknown;
  return std::nullopt;
}

std::optional<int> decode(const CodedPacket& packet, const std::set<int>& knowledge,
                          const std::set<int>& outstanding);

/// Result of restricting a problem to the files that were actually requested.
struct PrunedProblem {
  ProblemInstance instance;    // N' = K, M' = min(M, K)
  CacheMatrix cache;           // rows of dropped files removed
  DemandVector demands;        // always (0, 1, ..., K-1)
  std::vector<int> file_map;   // old file index -> new index, or -1 if dropped
};

/// Requested file d_i becomes file i of the reduced library; every other file
/// is dropped. Demands must be distinct.
PrunedProblem prune_to_requested(const ProblemInstance& instance, const CacheMatrix& cache,
                                 const DemandVector& demands);

/// Uniformly random distinct demands (a random K-permutation of the N files).
DemandVector random_distinct_demands(const ProblemInstance& instance, Rng& rng);

}  // namespace codedcache
