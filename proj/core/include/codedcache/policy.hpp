#pragma once

// Actor-critic delivery agent.
//
// Actor:  3NKF -> 32 (tanh) -> 32 (tanh) -> NF logits; p_b = sigmoid(logit_b).
// Critic: 3NKF -> 32 (tanh) -> 32 (tanh) -> 1.
// Actions are factored: bit b is selected independently with probability p_b.
// Gradients are computed by hand-written reverse-mode differentiation.

#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "codedcache/cache_core.hpp"
#include "codedcache/delivery_env.hpp"

namespace codedcache {

/// Loss or update became non-finite.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kHiddenWidth = 32;

/// Fully connected tanh network with a linear output layer. Parameters are
/// stored flat, layer by layer: weights (out x in, row-major) then biases.
class Mlp {
 public:
  struct Activations {
    // layers[0] is the input; layers[l] the output of layer l (tanh for
    // hidden layers, linear for the last one).
    std::vector<std::vector<double>> layers;
    std::span<const double> output() const { return layers.back(); }
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  int input_size() const { return widths_.front(); }
  int output_size() const { return widths_.back(); }

  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<std::size_t>(widths_[layer]) * widths_[layer + 1];
  }

  /// Zero-mean uniform weights with half-width 1/sqrt(fan_in); zero biases.
  void init_uniform(Rng& rng);

  void forward(std::span<const double> input, Activations& acts) const;
  std::vector<double> forward(std::span<const double> input) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Activations& acts, std::span<const double> grad_output,
                std::span<double> grad) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  int iterations = 1000;
  int batch_steps = 500;
  double entropy_coef = 0.05;
  double lr0 = 5e-3;
  double lr_decay = 0.9;
  int lr_decay_every = 100;
  double gamma = 0.99;
  int episode_cap = kDefaultEpisodeCap;
  double value_loss_coef = 0.5;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct PolicyParams {
  ProblemInstance dims;  // N, K, F (M is irrelevant to the network)
  Mlp actor;
  Mlp critic;
  // Adam moments over actor params followed by critic params.
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long long optimizer_steps = 0;
  int iteration = 0;

  std::size_t param_count() const { return actor.param_count() + critic.param_count(); }
};

struct Gradients {
  std::vector<double> actor;
  std::vector<double> critic;
};

PolicyParams init_params(int num_files, int num_users, int file_bits, Rng& rng);
/// Same shapes as init_params with every weight and bias zero.
PolicyParams zero_params(int num_files, int num_users, int file_bits);

std::vector<double> forward_actor(const PolicyParams& params, std::span<const double> observation);
double forward_critic(const PolicyParams& params, std::span<const double> observation);

Action sample_action(std::span<const double> probabilities, Rng& rng);
Action greedy_action(std::span<const double> probabilities);

/// Steps in rollout order. `episode_end[t]` marks the last step of an episode
/// (terminal, capped, or cut by the end of the batch).
struct TrajectoryBatch {
  int observation_size = 0;
  int action_size = 0;
  std::vector<double> observations;
  std::vector<std::uint8_t> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> episode_end;

  int size() const { return static_cast<int>(rewards.size()); }
  std::span<const double> observation(int t) const {
    return std::span<const double>(observations).subspan(
        static_cast<std::size_t>(t) * observation_size, observation_size);
  }
  std::span<const std::uint8_t> action(int t) const {
    return std::span<const std::uint8_t>(actions).subspan(
        static_cast<std::size_t>(t) * action_size, action_size);
  }
  void push(std::span<const double> obs, std::span<const std::uint8_t> act, double reward,
            bool end);
};

struct ReturnsAndAdvantages {
  std::vector<double> returns;
  std::vector<double> advantages;
};

/// Discounted returns within each episode; advantage = return - critic value.
ReturnsAndAdvantages compute_returns_and_advantages(const TrajectoryBatch& batch,
                                                    const PolicyParams& params, double gamma);

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean per-step entropy (nats), before the coefficient
};

/// loss = -(1/T) sum_t sum_b log pi(a_tb | o_t) A_t
///        + value_coef (1/T) sum_t (R_t - V(o_t))^2
///        - entropy_coef (1/T) sum_t H(pi(. | o_t))
/// with the advantages held constant. Throws TrainingError if non-finite.
std::pair<LossBreakdown, Gradients> loss_and_gradients(const PolicyParams& params,
                                                       const TrajectoryBatch& batch,
                                                       const ReturnsAndAdvantages& targets,
                                                       const TrainConfig& config);

/// lr0 * lr_decay ^ floor(iteration / lr_decay_every).
double lr_schedule(int iteration, const TrainConfig& config = {});

/// One optimizer step (Adam with 0.9 / 0.999 / 1e-8, or plain descent).
void update(PolicyParams& params, const Gradients& grads, double step_size,
            OptimizerKind optimizer = OptimizerKind::kAdam);

/// A reduced (N = K) problem ready for an episode.
struct EpisodeSpec {
  ProblemInstance instance;
  CacheMatrix cache;
  DemandVector demands;
};

using InstanceSampler = std::function<EpisodeSpec(Rng&)>;

/// Random placement and random distinct demands on `instance`, then pruned.
InstanceSampler random_instance_sampler(const ProblemInstance& instance);
/// Always the same episode.
InstanceSampler fixed_instance_sampler(EpisodeSpec spec);

struct CurveRecord {
  int iteration = 0;
  double mean_delay = 0.0;
  double mean_reward = 0.0;
  double mean_entropy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<CurveRecord> curve;
};

using IterationCallback = std::function<void(const CurveRecord&)>;

TrainResult train(const InstanceSampler& sampler, const TrainConfig& config,
                  const IterationCallback& on_iteration = {});

enum class EvalMode { kGreedy, kSample };

struct EvalResult {
  double mean_delay = 0.0;
  double std_delay = 0.0;
  std::vector<double> delays;
  std::vector<std::uint8_t> capped_flags;
  int capped = 0;
};

/// Runs one episode to completion or cap, recording the trace if asked.
DelayResult run_episode(const PolicyParams& params, const EpisodeSpec& spec, EvalMode mode,
                        Rng& rng, int episode_cap = kDefaultEpisodeCap,
                        std::vector<TraceRecord>* trace = nullptr);

EvalResult evaluate(const PolicyParams& params, const std::vector<EpisodeSpec>& episodes,
                    EvalMode mode, std::uint64_t seed, int episode_cap = kDefaultEpisodeCap);

// Checkpoint: text header
//   codedcache-policy 1
//   dims <N> <K> <F>
//   actor <w0> <w1> ... / critic <w0> <w1> ...
//   iteration <i>
// followed by actor then critic parameters (flat layer order), 17 significant
// digits, whitespace separated.
void save_checkpoint(std::ostream& out, const PolicyParams& params);
PolicyParams load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace codedcache
