#include "codedcache/delivery_env.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace codedcache {

Action Action::from_mask(std::span<const std::uint8_t> mask) {
  Action a;
  for (std::size_t b = 0; b < mask.size(); ++b) {
    if (mask[b]) a.selected.push_back(static_cast<int>(b));
  }
  return a;
}

std::vector<Delivery> broadcast(const CacheMatrix& cache, RequestMatrix& requests,
                                BitMatrix& delivered, const CodedPacket& packet) {
  std::vector<Delivery> out;
  if (packet.empty()) return out;
  const std::span<const int> bits(packet.bits);
  for (int user = 0; user < requests.cols(); ++user) {
    auto hit = decode(
        bits, [&](int b) { return cache(b, user) || delivered(b, user); },
        [&](int b) { return requests(b, user); });
    if (hit) out.push_back(Delivery{user, *hit});
  }
  for (const auto& d : out) {
    requests.set(d.bit, d.user, false);
    delivered.set(d.bit, d.user, true);
  }
  return out;
}

EnvState reset(const ProblemInstance& instance, const CacheMatrix& cache,
               const DemandVector& demands, Rng& rng, int episode_cap) {
  instance.validate();
  validate_demands(instance, demands, true);
  if (cache.rows() != instance.total_bits() || cache.cols() != instance.num_users) {
    throw ConfigError("cache matrix dimensions do not match instance");
  }
  if (episode_cap < 1) throw ConfigError("episode cap must be positive");

  EnvState s;
  s.instance = instance;
  s.cache = cache;
  s.demands = demands;
  s.requests = outstanding_bits(instance, cache, demands);
  s.delivered = BitMatrix(instance.total_bits(), instance.num_users);
  s.episode_cap = episode_cap;
  s.initial_outstanding = s.requests.count();
  s.next_bit = select_next_bit(s, rng);
  return s;
}

std::optional<int> select_next_bit(const EnvState& state, Rng& rng) {
  std::vector<int> rows;
  for (int b = 0; b < state.requests.rows(); ++b) {
    if (state.requests.row_any(b)) rows.push_back(b);
  }
  if (rows.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
  return rows[pick(rng)];
}

void observe_into(const EnvState& state, std::span<double> out) {
  const int rows = state.instance.total_bits();
  const int k = state.instance.num_users;
  const std::size_t block = static_cast<std::size_t>(rows) * k;
  if (out.size() != 3 * block) throw ConfigError("observation buffer has wrong size");
  std::size_t i = 0;
  for (int b = 0; b < rows; ++b)
    for (int u = 0; u < k; ++u) out[i++] = state.cache(b, u) ? 1.0 : 0.0;
  for (int b = 0; b < rows; ++b)
    for (int u = 0; u < k; ++u) out[i++] = state.requests(b, u) ? 1.0 : 0.0;
  for (int b = 0; b < rows; ++b)
    for (int u = 0; u < k; ++u)
      out[i++] = (state.next_bit && *state.next_bit == b && state.requests(b, u)) ? 1.0 : 0.0;
}

std::vector<double> observe(const EnvState& state) {
  std::vector<double> out(observation_size(state.instance));
  observe_into(state, out);
  return out;
}

StepOutcome step(EnvState& state, const Action& action, Rng& rng) {
  if (state.done()) throw UsageError("step called on a finished episode");
  const int nf = state.instance.total_bits();
  for (int b : action.selected) {
    if (b < 0 || b >= nf) throw ConfigError("action selects bit outside library");
  }

  StepOutcome out;
  out.packet = CodedPacket(action.selected);
  out.deliveries = broadcast(state.cache, state.requests, state.delivered, out.packet);
  out.delivered_count = static_cast<int>(out.deliveries.size());

  bool next_delivered = false;
  for (const auto& d : out.deliveries) {
    if (state.next_bit && d.bit == *state.next_bit) next_delivered = true;
  }
  out.reward = next_delivered ? std::log2(static_cast<double>(out.delivered_count)) : -1.0;

  ++state.t;
  state.next_bit = select_next_bit(state, rng);
  out.done = state.done();
  return out;
}

DelayResult normalized_delay(const EnvState& state) {
  if (!state.done()) throw UsageError("normalized_delay called before the episode ended");
  DelayResult r;
  r.capped = !state.complete();
  r.fallback_bits = state.requests.count();
  r.delay = static_cast<double>(state.t + r.fallback_bits) / state.instance.file_bits;
  return r;
}

std::string to_trace_line(const TraceRecord& record) {
  nlohmann::json j;
  j["t"] = record.t;
  j["packet"] = record.packet.bits;
  auto deliveries = nlohmann::json::array();
  for (const auto& d : record.deliveries) deliveries.push_back({d.user, d.bit});
  j["deliveries"] = std::move(deliveries);
  j["B"] = record.delivered_count;
  j["reward"] = record.reward;
  return j.dump();
}

TraceRecord parse_trace_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TraceRecord r;
  r.t = j.at("t").get<int>();
  r.packet = CodedPacket(j.at("packet").get<std::vector<int>>());
  for (const auto& d : j.at("deliveries")) {
    r.deliveries.push_back(Delivery{d.at(0).get<int>(), d.at(1).get<int>()});
  }
  r.delivered_count = j.at("B").get<int>();
  r.reward = j.at("reward").get<double>();
  return r;
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
  for (const auto& r : records) out << to_trace_line(r) << '\n';
}

std::vector<TraceRecord> read_trace(std::istream& in) {
  std::vector<TraceRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(parse_trace_line(line));
  }
  return records;
}

}  // namespace codedcache
