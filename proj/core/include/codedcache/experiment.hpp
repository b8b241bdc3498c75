#pragma once

// Experiment harness behind the cclab command-line tool: configuration
// parsing, training, paired comparison, runtime benchmark and traces.
//
// Config files are plain `key = value` lines; '#' starts a comment. Flag
// overrides use the same keys and win over file values.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "codedcache/baselines.hpp"
#include "codedcache/policy.hpp"

namespace codedcache {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitRuntimeError = 3,
  kExitDivergence = 4,
};

inline const std::vector<std::string> kAllAlgorithms = {"uncoded", "gcm", "greedy", "oracle",
                                                        "agent"};

struct ExperimentConfig {
  ProblemInstance instance;  // N, K, F, M
  std::string prefetch = "random";  // random | mn
  int eval_episodes = 200;
  std::vector<std::string> algorithms = kAllAlgorithms;
  std::uint64_t seed = 1;
  TrainConfig train;
  std::string out_dir = ".";
  std::string checkpoint;
  int vertex_budget = kDefaultVertexBudget;
  // bench
  int k_min = 5;
  int k_max = 10;
  int reps = 5;

  bool wants(const std::string& algorithm) const;
};

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. Throws ConfigError on malformed lines and
/// duplicate keys.
KeyValues parse_key_values(std::istream& in);

/// Builds and validates a config from file values overlaid with flag values.
/// `required` keys must appear in one of the two sources.
ExperimentConfig parse_config(const KeyValues& file_values, const KeyValues& flag_values,
                              const std::vector<std::string>& required = {"K", "N", "M", "F"});
ExperimentConfig parse_config_file(const std::string& path, const KeyValues& flag_values);

/// The training/evaluation instance family described by the config.
InstanceSampler make_sampler(const ExperimentConfig& config);
/// The shared, seed-determined evaluation instances.
std::vector<EpisodeSpec> make_eval_set(const ExperimentConfig& config);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomically(const std::string& path, const std::string& content);

std::string training_curve_csv(const std::vector<CurveRecord>& curve);

/// Trains per the config, writing training_curve.csv and policy.ckpt.
TrainResult run_train(const ExperimentConfig& config);

struct ComparisonRow {
  std::string algorithm;
  double mean_delay = 0.0;
  double std_delay = 0.0;
  double capped_frac = 0.0;
  double seconds = 0.0;
  bool skipped = false;
};

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// Evaluates every configured algorithm on the same instance list. When
/// "agent" is requested, `agent` is used, else config.checkpoint is loaded,
/// else a policy is trained first. Writes compare.csv.
std::vector<ComparisonRow> run_compare(const ExperimentConfig& config,
                                       const std::optional<PolicyParams>& agent = std::nullopt);

struct RuntimeRow {
  int num_users = 0;
  std::string algorithm;
  double median_seconds = 0.0;
  int reps = 0;  // repetitions actually timed
};

std::string runtime_csv(const std::vector<RuntimeRow>& rows);

/// For K in [k_min, k_max] with N = K: median wall-clock time of a full
/// greedy-mode agent episode and of greedy / exact schedule construction.
/// The agent uses checkpoint `<checkpoint>/policy_K<k>.ckpt` when present,
/// otherwise freshly initialized weights of the right shape. Oracle reps
/// whose graph exceeds the vertex budget are skipped. Writes runtime.csv.
std::vector<RuntimeRow> run_bench_runtime(const ExperimentConfig& config);

/// One episode from the config's instance family. With a single baseline in
/// `algorithms` its schedule is traced, otherwise the checkpointed agent is
/// run in greedy mode. Writes trace.jsonl.
std::vector<TraceRecord> emit_trace(const ExperimentConfig& config);

struct EvalSummary {
  EvalResult result;
  std::string csv;
};

/// Greedy-mode evaluation of config.checkpoint. Writes eval.csv.
EvalSummary run_eval(const ExperimentConfig& config);

}  // namespace codedcache
