// cclab: train, evaluate, compare and benchmark coded-caching delivery.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "codedcache/experiment.hpp"

namespace {

using namespace codedcache;

// Flags shared by every subcommand. Unset options do not override the file.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> k, n, m, f;
  std::optional<std::string> algs;
  std::optional<int> iterations;
  std::optional<int> eval_episodes;
  std::optional<std::string> checkpoint;
  std::vector<std::string> overrides;  // key=value

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--seed", seed);
    app->add_option("--out", out, "output directory");
    app->add_option("--K", k, "users");
    app->add_option("--N", n, "files");
    app->add_option("--M", m, "cache size in files");
    app->add_option("--F", f, "bits per file");
    app->add_option("--algs", algs, "comma list of uncoded,gcm,greedy,oracle,agent");
    app->add_option("--iterations", iterations);
    app->add_option("--eval-episodes", eval_episodes);
    app->add_option("--checkpoint", checkpoint);
    app->add_option("--set", overrides, "any config key as key=value (repeatable)");
  }

  KeyValues flag_values() const {
    KeyValues kv;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got '" + o + "'");
      }
      kv[o.substr(0, eq)] = o.substr(eq + 1);
    }
    auto put = [&](const char* key, const auto& v) {
      if (v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) {
          kv[key] = *v;
        } else {
          kv[key] = std::to_string(*v);
        }
      }
    };
    put("seed", seed);
    put("out", out);
    put("K", k);
    put("N", n);
    put("M", m);
    put("F", f);
    put("algs", algs);
    put("iterations", iterations);
    put("eval_episodes", eval_episodes);
    put("checkpoint", checkpoint);
    return kv;
  }

  ExperimentConfig load(const std::vector<std::string>& required,
                        const KeyValues& defaults = {}) const {
    KeyValues flags = flag_values();
    KeyValues file;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
      file = parse_key_values(in);
    }
    for (const auto& [k, v] : defaults) {
      if (!flags.contains(k) && !file.contains(k)) file[k] = v;
    }
    return parse_config(file, flags, required);
  }
};

const std::vector<std::string> kInstanceKeys = {"K", "N", "M", "F"};

void print_rows(const std::vector<ComparisonRow>& rows) {
  std::cout << std::left << std::setw(10) << "algorithm" << std::setw(12) << "mean_delay"
            << std::setw(12) << "std" << std::setw(10) << "capped" << "seconds\n";
  for (const auto& r : rows) {
    std::cout << std::setw(10) << r.algorithm;
    if (r.skipped) {
      std::cout << "skipped (over vertex budget)\n";
      continue;
    }
    std::cout << std::setw(12) << r.mean_delay << std::setw(12) << r.std_delay << std::setw(10)
              << r.capped_frac << r.seconds << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coded-caching delivery lab"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, compare_flags, bench_flags, trace_flags;
  auto* train_cmd = app.add_subcommand("train", "train the actor-critic agent");
  train_flags.attach(train_cmd);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint in greedy mode");
  eval_flags.attach(eval_cmd);
  auto* compare_cmd = app.add_subcommand("compare", "paired comparison of algorithms");
  compare_flags.attach(compare_cmd);
  auto* bench_cmd = app.add_subcommand("bench", "inference runtime versus K");
  bench_flags.attach(bench_cmd);
  std::optional<int> k_min, k_max, reps;
  bench_cmd->add_option("--k-min", k_min);
  bench_cmd->add_option("--k-max", k_max);
  bench_cmd->add_option("--reps", reps);
  auto* trace_cmd = app.add_subcommand("trace", "write one episode as JSON lines");
  trace_flags.attach(trace_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*train_cmd) {
      const auto config = train_flags.load(kInstanceKeys);
      const auto result = run_train(config);
      const auto& last = result.curve.back();
      std::cout << "trained " << result.curve.size() << " iterations; final mean_delay "
                << last.mean_delay << ", mean_reward " << last.mean_reward << '\n';
    } else if (*eval_cmd) {
      const auto config = eval_flags.load(kInstanceKeys);
      const auto s = run_eval(config);
      std::cout << "mean_delay " << s.result.mean_delay << " std " << s.result.std_delay
                << " capped " << s.result.capped << '/' << s.result.delays.size() << '\n';
    } else if (*compare_cmd) {
      print_rows(run_compare(compare_flags.load(kInstanceKeys)));
    } else if (*bench_cmd) {
      KeyValues defaults{{"M", "3"}, {"F", "2"}};
      auto flags = bench_flags;
      if (k_min) flags.overrides.push_back("k_min=" + std::to_string(*k_min));
      if (k_max) flags.overrides.push_back("k_max=" + std::to_string(*k_max));
      if (reps) flags.overrides.push_back("reps=" + std::to_string(*reps));
      // The instance is rebuilt per K with N = K; these only have to admit M.
      defaults["N"] = "64";
      defaults["K"] = "1";
      auto config = flags.load({}, defaults);
      for (const auto& r : run_bench_runtime(config)) {
        std::cout << "K=" << r.num_users << ' ' << std::setw(8) << r.algorithm << ' '
                  << r.median_seconds << " s (" << r.reps << " reps)\n";
      }
    } else if (*trace_cmd) {
      const auto records = emit_trace(trace_flags.load(kInstanceKeys));
      std::cout << records.size() << " steps\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  return kExitOk;
}
