#include "codedcache/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace codedcache {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

long long parse_integer(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ConfigError("invalid integer for '" + key + "': '" + value + "'");
  }
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError("value for '" + key + "' out of range");
  }
  return static_cast<int>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(v)) {
    throw ConfigError("invalid number for '" + key + "': '" + value + "'");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_real(double v) {
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

fs::path output_path(const ExperimentConfig& config, const std::string& name) {
  fs::create_directories(config.out_dir);
  return fs::path(config.out_dir) / name;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Seconds per call, repeating `fn` until the timer has run long enough to
// resolve microsecond-scale work.
constexpr double kMinTimedSeconds = 1e-3;

template <typename Fn>
double seconds_per_call(Fn&& fn) {
  int calls = 0;
  const auto start = Clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++calls;
    elapsed = seconds_since(start);
  } while (elapsed < kMinTimedSeconds);
  return elapsed / calls;
}

RequestMatrix requests_of(const EpisodeSpec& e) {
  return outstanding_bits(e.instance, e.cache, e.demands);
}

std::optional<Schedule> baseline_schedule(const std::string& algorithm, const EpisodeSpec& e,
                                          int vertex_budget) {
  if (algorithm == "uncoded") return uncoded_delivery(e.instance, e.cache, e.demands);
  if (algorithm == "gcm") return gcm_delivery(e.instance, e.cache, e.demands);
  const auto graph = build_side_info_graph(e.instance, e.cache, requests_of(e));
  if (algorithm == "greedy") return greedy_clique_cover(graph);
  if (algorithm == "oracle") return exact_min_clique_cover(graph, vertex_budget);
  throw ConfigError("unknown algorithm '" + algorithm + "'");
}

PolicyParams load_or_train_agent(const ExperimentConfig& config) {
  if (!config.checkpoint.empty()) return load_checkpoint(config.checkpoint);
  return run_train(config).params;
}

}  // namespace

bool ExperimentConfig::wants(const std::string& algorithm) const {
  return std::find(algorithms.begin(), algorithms.end(), algorithm) != algorithms.end();
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

ExperimentConfig parse_config(const KeyValues& file_values, const KeyValues& flag_values,
                              const std::vector<std::string>& required) {
  KeyValues merged = file_values;
  for (const auto& [k, v] : flag_values) merged[k] = v;

  for (const auto& key : required) {
    if (!merged.contains(key)) throw ConfigError("missing required key '" + key + "'");
  }

  ExperimentConfig c;
  c.instance = ProblemInstance{1, 1, 1, 0};
  for (const auto& [key, value] : merged) {
    if (key == "K") c.instance.num_users = parse_int(key, value);
    else if (key == "N") c.instance.num_files = parse_int(key, value);
    else if (key == "M") c.instance.cache_files = parse_int(key, value);
    else if (key == "F") c.instance.file_bits = parse_int(key, value);
    else if (key == "prefetch") c.prefetch = value;
    else if (key == "iterations") c.train.iterations = parse_int(key, value);
    else if (key == "eval_episodes") c.eval_episodes = parse_int(key, value);
    else if (key == "algs") c.algorithms = split_list(value);
    else if (key == "seed") {
      const long long s = parse_integer(key, value);
      if (s < 0) throw ConfigError("invalid value for 'seed': must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
    }
    else if (key == "out") c.out_dir = value;
    else if (key == "checkpoint") c.checkpoint = value;
    else if (key == "batch_steps") c.train.batch_steps = parse_int(key, value);
    else if (key == "entropy_coef") c.train.entropy_coef = parse_real(key, value);
    else if (key == "lr0") c.train.lr0 = parse_real(key, value);
    else if (key == "lr_decay") c.train.lr_decay = parse_real(key, value);
    else if (key == "lr_decay_every") c.train.lr_decay_every = parse_int(key, value);
    else if (key == "gamma") c.train.gamma = parse_real(key, value);
    else if (key == "episode_cap") c.train.episode_cap = parse_int(key, value);
    else if (key == "value_loss_coef") c.train.value_loss_coef = parse_real(key, value);
    else if (key == "optimizer") {
      if (value == "adam") c.train.optimizer = OptimizerKind::kAdam;
      else if (value == "sgd") c.train.optimizer = OptimizerKind::kSgd;
      else throw ConfigError("invalid value for 'optimizer': '" + value + "' (adam|sgd)");
    }
    else if (key == "vertex_budget") c.vertex_budget = parse_int(key, value);
    else if (key == "k_min") c.k_min = parse_int(key, value);
    else if (key == "k_max") c.k_max = parse_int(key, value);
    else if (key == "reps") c.reps = parse_int(key, value);
    else throw ConfigError("unknown key '" + key + "'");
  }
  c.train.seed = c.seed;

  c.instance.validate();
  if (c.instance.num_users > c.instance.num_files) {
    throw ConfigError("distinct demands need N >= K (K=" + std::to_string(c.instance.num_users) +
                      ", N=" + std::to_string(c.instance.num_files) + ")");
  }
  if (c.prefetch != "random" && c.prefetch != "mn") {
    throw ConfigError("invalid value for 'prefetch': '" + c.prefetch + "' (random|mn)");
  }
  if (c.prefetch == "mn") mn_prefetch(c.instance);  // divisibility check
  if (c.eval_episodes < 1) throw ConfigError("eval_episodes must be at least 1");
  if (c.algorithms.empty()) throw ConfigError("algs must name at least one algorithm");
  for (const auto& a : c.algorithms) {
    if (std::find(kAllAlgorithms.begin(), kAllAlgorithms.end(), a) == kAllAlgorithms.end()) {
      throw ConfigError("unknown algorithm '" + a + "' in 'algs'");
    }
  }
  if (std::set<std::string>(c.algorithms.begin(), c.algorithms.end()).size() !=
      c.algorithms.size()) {
    throw ConfigError("duplicate algorithm in 'algs'");
  }
  if (c.vertex_budget < 1 || c.vertex_budget > 64) {
    throw ConfigError("vertex_budget must be in [1, 64]");
  }
  if (c.k_min < 1 || c.k_max < c.k_min) throw ConfigError("need 1 <= k_min <= k_max");
  if (c.reps < 1) throw ConfigError("reps must be at least 1");
  c.train.validate();
  return c;
}

ExperimentConfig parse_config_file(const std::string& path, const KeyValues& flag_values) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(parse_key_values(in), flag_values);
}

InstanceSampler make_sampler(const ExperimentConfig& config) {
  if (config.prefetch == "random") return random_instance_sampler(config.instance);
  const ProblemInstance instance = config.instance;
  const CacheMatrix cache = mn_prefetch(instance);
  return [instance, cache](Rng& rng) {
    const auto demands = random_distinct_demands(instance, rng);
    auto pruned = prune_to_requested(instance, cache, demands);
    return EpisodeSpec{pruned.instance, std::move(pruned.cache), std::move(pruned.demands)};
  };
}

std::vector<EpisodeSpec> make_eval_set(const ExperimentConfig& config) {
  // Decoupled from the training stream, which is seeded with `seed` itself.
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto sampler = make_sampler(config);
  std::vector<EpisodeSpec> out;
  out.reserve(config.eval_episodes);
  for (int i = 0; i < config.eval_episodes; ++i) out.push_back(sampler(rng));
  return out;
}

void write_file_atomically(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string training_curve_csv(const std::vector<CurveRecord>& curve) {
  std::ostringstream out;
  out << "iteration,mean_delay,mean_reward,mean_entropy,lr\n";
  out << std::setprecision(10);
  for (const auto& r : curve) {
    out << r.iteration << ',' << r.mean_delay << ',' << r.mean_reward << ',' << r.mean_entropy
        << ',' << r.lr << '\n';
  }
  return out.str();
}

TrainResult run_train(const ExperimentConfig& config) {
  auto result = train(make_sampler(config), config.train);
  write_file_atomically(output_path(config, "training_curve.csv").string(),
                        training_curve_csv(result.curve));
  std::ostringstream ckpt;
  save_checkpoint(ckpt, result.params);
  write_file_atomically(output_path(config, "policy.ckpt").string(), ckpt.str());
  return result;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "algorithm,mean_delay,std_delay,capped_frac,seconds\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',';
    if (r.skipped) {
      out << "skipped,skipped,skipped,skipped\n";
    } else {
      out << format_real(r.mean_delay) << ',' << format_real(r.std_delay) << ','
          << format_real(r.capped_frac) << ',' << format_real(r.seconds) << '\n';
    }
  }
  return out.str();
}

std::vector<ComparisonRow> run_compare(const ExperimentConfig& config,
                                       const std::optional<PolicyParams>& agent) {
  const auto episodes = make_eval_set(config);
  std::vector<ComparisonRow> rows;
  for (const auto& algorithm : config.algorithms) {
    ComparisonRow row;
    row.algorithm = algorithm;
    if (algorithm == "agent") {
      const PolicyParams params = agent ? *agent : load_or_train_agent(config);
      const auto start = Clock::now();
      const auto eval = evaluate(params, episodes, EvalMode::kGreedy, config.seed,
                                 config.train.episode_cap);
      row.seconds = seconds_since(start);
      row.mean_delay = eval.mean_delay;
      row.std_delay = eval.std_delay;
      row.capped_frac = static_cast<double>(eval.capped) / static_cast<double>(episodes.size());
    } else {
      std::vector<double> delays;
      const auto start = Clock::now();
      for (const auto& e : episodes) {
        const auto schedule = baseline_schedule(algorithm, e, config.vertex_budget);
        if (!schedule) {
          row.skipped = true;
          break;
        }
        delays.push_back(schedule_delay(*schedule, e.instance.file_bits));
      }
      row.seconds = seconds_since(start);
      row.mean_delay = mean_of(delays);
      row.std_delay = std_of(delays);
    }
    rows.push_back(row);
  }
  write_file_atomically(output_path(config, "compare.csv").string(), comparison_csv(rows));
  return rows;
}

std::string runtime_csv(const std::vector<RuntimeRow>& rows) {
  std::ostringstream out;
  out << "K,algorithm,median_seconds,reps\n";
  for (const auto& r : rows) {
    out << r.num_users << ',' << r.algorithm << ',' << format_real(r.median_seconds) << ','
        << r.reps << '\n';
  }
  return out.str();
}

std::vector<RuntimeRow> run_bench_runtime(const ExperimentConfig& config) {
  std::vector<RuntimeRow> rows;
  for (int k = config.k_min; k <= config.k_max; ++k) {
    ExperimentConfig per_k = config;
    per_k.instance = ProblemInstance{k, k, config.instance.file_bits,
                                     std::min(config.instance.cache_files, k)};
    per_k.prefetch = "random";
    per_k.eval_episodes = config.reps;
    const auto episodes = make_eval_set(per_k);

    if (config.wants("agent")) {
      PolicyParams params;
      const fs::path ckpt = fs::path(config.checkpoint) / ("policy_K" + std::to_string(k) + ".ckpt");
      if (!config.checkpoint.empty() && fs::is_regular_file(ckpt)) {
        params = load_checkpoint(ckpt.string());
      } else {
        Rng init_rng(config.seed + static_cast<std::uint64_t>(k));
        params = init_params(k, k, config.instance.file_bits, init_rng);
      }
      std::vector<double> times;
      for (const auto& e : episodes) {
        Rng rng(config.seed);
        times.push_back(seconds_per_call(
            [&] { run_episode(params, e, EvalMode::kGreedy, rng, config.train.episode_cap); }));
      }
      rows.push_back(RuntimeRow{k, "agent", median_of(times), static_cast<int>(times.size())});
    }
    for (const std::string algorithm : {"greedy", "oracle"}) {
      if (!config.wants(algorithm)) continue;
      std::vector<double> times;
      for (const auto& e : episodes) {
        if (!baseline_schedule(algorithm, e, config.vertex_budget)) continue;
        times.push_back(
            seconds_per_call([&] { baseline_schedule(algorithm, e, config.vertex_budget); }));
      }
      if (times.empty()) continue;
      rows.push_back(RuntimeRow{k, algorithm, median_of(times), static_cast<int>(times.size())});
    }
  }
  write_file_atomically(output_path(config, "runtime.csv").string(), runtime_csv(rows));
  return rows;
}

std::vector<TraceRecord> emit_trace(const ExperimentConfig& config) {
  Rng rng(config.seed);
  const auto spec = make_sampler(config)(rng);
  std::vector<TraceRecord> records;
  const bool single_baseline = config.algorithms.size() == 1 && config.algorithms[0] != "agent";
  if (single_baseline) {
    const auto schedule = baseline_schedule(config.algorithms[0], spec, config.vertex_budget);
    if (!schedule) throw ConfigError("instance exceeds the oracle vertex budget");
    records = schedule_trace(spec.instance, spec.cache, spec.demands, *schedule, rng);
  } else {
    if (config.checkpoint.empty()) throw ConfigError("trace needs a checkpoint for the agent");
    const auto params = load_checkpoint(config.checkpoint);
    run_episode(params, spec, EvalMode::kGreedy, rng, config.train.episode_cap, &records);
  }
  std::ostringstream out;
  write_trace(out, records);
  write_file_atomically(output_path(config, "trace.jsonl").string(), out.str());
  return records;
}

EvalSummary run_eval(const ExperimentConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("eval needs a checkpoint");
  const auto params = load_checkpoint(config.checkpoint);
  const auto episodes = make_eval_set(config);
  EvalSummary s;
  s.result = evaluate(params, episodes, EvalMode::kGreedy, config.seed, config.train.episode_cap);
  std::ostringstream out;
  out << "episode,delay,capped\n";
  for (std::size_t i = 0; i < s.result.delays.size(); ++i) {
    out << i << ',' << format_real(s.result.delays[i]) << ','
        << static_cast<int>(s.result.capped_flags[i]) << '\n';
  }
  s.csv = out.str();
  write_file_atomically(output_path(config, "eval.csv").string(), s.csv);
  return s;
}

}  // namespace codedcache
