#include "codedcache/cache_core.hpp"

#include <algorithm>
#include <numeric>

namespace codedcache {

void ProblemInstance::validate() const {
  if (num_files < 1) throw ConfigError("N must be at least 1");
  if (num_users < 1) throw ConfigError("K must be at least 1");
  if (file_bits < 1) throw ConfigError("F must be at least 1");
  if (cache_files < 0) throw ConfigError("M must be non-negative");
  if (cache_files > num_files) throw ConfigError("cache exceeds library (M > N)");
}

bool BitMatrix::row_any(int r) const {
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(index(r, 0));
  return std::any_of(begin, begin + cols_, [](std::uint8_t v) { return v != 0; });
}

int BitMatrix::col_count(int c) const {
  int n = 0;
  for (int r = 0; r < rows_; ++r) n += data_[index(r, c)];
  return n;
}

int BitMatrix::count() const {
  return static_cast<int>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

CodedPacket::CodedPacket(std::vector<int> b) : bits(std::move(b)) {
  std::sort(bits.begin(), bits.end());
  bits.erase(std::unique(bits.begin(), bits.end()), bits.end());
}

CacheMatrix random_prefetch(const ProblemInstance& instance, Rng& rng) {
  instance.validate();
  const int nf = instance.total_bits();
  const int mf = instance.cache_bits();
  CacheMatrix cache(nf, instance.num_users);
  std::vector<int> pool(nf);
  for (int user = 0; user < instance.num_users; ++user) {
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates: the first mf slots become a uniform mf-subset.
    for (int i = 0; i < mf; ++i) {
      std::uniform_int_distribution<int> pick(i, nf - 1);
      std::swap(pool[i], pool[pick(rng)]);
      cache.set(pool[i], user);
    }
  }
  return cache;
}

CacheMatrix mn_prefetch(const ProblemInstance& instance) {
  instance.validate();
  const int k = instance.num_users;
  const int f = instance.file_bits;
  if (instance.num_files != k) {
    throw ConfigError("mn_prefetch requires N == K");
  }
  if (f % k != 0) {
    throw ConfigError("mn_prefetch requires F divisible by K (F=" + std::to_string(f) +
                      ", K=" + std::to_string(k) + ")");
  }
  const int segment = f / k;
  CacheMatrix cache(instance.total_bits(), k);
  for (int user = 0; user < k; ++user) {
    for (int j = 0; j < instance.cache_files; ++j) {
      const int seg = (user + j) % k;
      for (int file = 0; file < instance.num_files; ++file) {
        for (int o = seg * segment; o < (seg + 1) * segment; ++o) {
          cache.set(BitId{file, o}.global(f), user);
        }
      }
    }
  }
  return cache;
}

void validate_demands(const ProblemInstance& instance, const DemandVector& demands,
                      bool require_distinct) {
  if (static_cast<int>(demands.size()) != instance.num_users) {
    throw ConfigError("demand vector length " + std::to_string(demands.size()) +
                      " does not match K=" + std::to_string(instance.num_users));
  }
  for (int d : demands) {
    if (d < 0 || d >= instance.num_files) {
      throw ConfigError("demand " + std::to_string(d) + " outside library");
    }
  }
  if (require_distinct) {
    std::vector<int> sorted = demands;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError("demands must be distinct");
    }
  }
}

RequestMatrix outstanding_bits(const ProblemInstance& instance, const CacheMatrix& cache,
                               const DemandVector& demands) {
  validate_demands(instance, demands, false);
  if (cache.rows() != instance.total_bits() || cache.cols() != instance.num_users) {
    throw ConfigError("cache matrix dimensions do not match instance");
  }
  const int f = instance.file_bits;
  RequestMatrix requests(instance.total_bits(), instance.num_users);
  for (int user = 0; user < instance.num_users; ++user) {
    for (int o = 0; o < f; ++o) {
      const int bit = BitId{demands[user], o}.global(f);
      if (!cache(bit, user)) requests.set(bit, user);
    }
  }
  return requests;
}

std::optional<int> decode(const CodedPacket& packet, const std::set<int>& knowledge,
                          const std::set<int>& outstanding) {
  return decode(
      std::span<const int>(packet.bits), [&](int b) { return knowledge.contains(b); },
      [&](int b) { return outstanding.contains(b); });
}

PrunedProblem prune_to_requested(const ProblemInstance& instance, const CacheMatrix& cache,
                                 const DemandVector& demands) {
  instance.validate();
  validate_demands(instance, demands, true);
  const int k = instance.num_users;
  const int f = instance.file_bits;

  PrunedProblem out;
  out.instance = ProblemInstance{k, k, f, std::min(instance.cache_files, k)};
  out.file_map.assign(instance.num_files, -1);
  out.demands.resize(k);
  for (int user = 0; user < k; ++user) {
    out.file_map[demands[user]] = user;
    out.demands[user] = user;
  }
  out.cache = CacheMatrix(k * f, k);
  for (int old_file = 0; old_file < instance.num_files; ++old_file) {
    const int new_file = out.file_map[old_file];
    if (new_file < 0) continue;
    for (int o = 0; o < f; ++o) {
      for (int user = 0; user < k; ++user) {
        if (cache(BitId{old_file, o}.global(f), user)) {
          out.cache.set(BitId{new_file, o}.global(f), user);
        }
      }
    }
  }
  return out;
}

DemandVector random_distinct_demands(const ProblemInstance& instance, Rng& rng) {
  if (instance.num_users > instance.num_files) {
    throw ConfigError("distinct demands need N >= K");
  }
  std::vector<int> files(instance.num_files);
  std::iota(files.begin(), files.end(), 0);
  for (int i = 0; i < instance.num_users; ++i) {
    std::uniform_int_distribution<int> pick(i, instance.num_files - 1);
    std::swap(files[i], files[pick(rng)]);
  }
  files.resize(instance.num_users);
  return files;
}

}  // namespace codedcache
