#include "codedcache/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace codedcache {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;
constexpr const char* kCheckpointMagic = "codedcache-policy";
constexpr int kCheckpointVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Entropy of Bernoulli(sigmoid(z)) in nats.
double bernoulli_entropy(double z) {
  const double p = sigmoid(z);
  return softplus(z) - z * p;
}

std::vector<int> network_widths(const ProblemInstance& dims, int outputs) {
  return {observation_size(dims), kHiddenWidth, kHiddenWidth, outputs};
}

}  // namespace

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < 1 || widths_[l + 1] < 1) throw ConfigError("MLP widths must be positive");
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  }
  params_.assign(offset, 0.0);
}

void Mlp::init_uniform(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (int l = 0; l < num_layers(); ++l) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t count = static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
    for (std::size_t i = 0; i < count; ++i) params_[offsets_[l] + i] = dist(rng);
  }
}

void Mlp::forward(std::span<const double> input, Activations& acts) const {
  if (static_cast<int>(input.size()) != input_size()) {
    throw ConfigError("network input has length " + std::to_string(input.size()) +
                      ", expected " + std::to_string(input_size()));
  }
  acts.layers.resize(widths_.size());
  acts.layers[0].assign(input.begin(), input.end());
  for (int l = 0; l < num_layers(); ++l) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const auto& x = acts.layers[l];
    auto& y = acts.layers[l + 1];
    y.resize(out);
    const bool hidden = l + 1 < num_layers();
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double sum = b[o];
      for (int i = 0; i < in; ++i) sum += row[i] * x[i];
      y[o] = hidden ? std::tanh(sum) : sum;
    }
  }
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  Activations acts;
  forward(input, acts);
  return acts.layers.back();
}

void Mlp::backward(const Activations& acts, std::span<const double> grad_output,
                   std::span<double> grad) const {
  std::vector<double> delta(grad_output.begin(), grad_output.end());
  std::vector<double> prev;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    const auto& x = acts.layers[l];
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* grow = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) grow[i] += d * x[i];
    }
    if (l == 0) break;
    prev.assign(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) prev[i] += d * row[i];
    }
    // x is tanh output for hidden layers: d tanh = 1 - tanh^2.
    for (int i = 0; i < in; ++i) prev[i] *= 1.0 - x[i] * x[i];
    delta.swap(prev);
  }
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (batch_steps < 1) throw ConfigError("batch_steps must be at least 1");
  if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be non-negative");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be at least 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (episode_cap < 1) throw ConfigError("episode_cap must be at least 1");
  if (!(value_loss_coef >= 0.0)) throw ConfigError("value_loss_coef must be non-negative");
}

PolicyParams zero_params(int num_files, int num_users, int file_bits) {
  PolicyParams p;
  p.dims = ProblemInstance{num_files, num_users, file_bits, 0};
  p.dims.validate();
  p.actor = Mlp(network_widths(p.dims, p.dims.total_bits()));
  p.critic = Mlp(network_widths(p.dims, 1));
  p.first_moment.assign(p.param_count(), 0.0);
  p.second_moment.assign(p.param_count(), 0.0);
  return p;
}

PolicyParams init_params(int num_files, int num_users, int file_bits, Rng& rng) {
  PolicyParams p = zero_params(num_files, num_users, file_bits);
  p.actor.init_uniform(rng);
  p.critic.init_uniform(rng);
  return p;
}

std::vector<double> forward_actor(const PolicyParams& params,
                                  std::span<const double> observation) {
  auto logits = params.actor.forward(observation);
  for (double& z : logits) z = sigmoid(z);
  return logits;
}

double forward_critic(const PolicyParams& params, std::span<const double> observation) {
  return params.critic.forward(observation)[0];
}

Action sample_action(std::span<const double> probabilities, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Action a;
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    if (unit(rng) < probabilities[b]) a.selected.push_back(static_cast<int>(b));
  }
  return a;
}

Action greedy_action(std::span<const double> probabilities) {
  Action a;
  for (std::size_t b = 0; b < probabilities.size(); ++b) {
    if (probabilities[b] > 0.5) a.selected.push_back(static_cast<int>(b));
  }
  return a;
}

void TrajectoryBatch::push(std::span<const double> obs, std::span<const std::uint8_t> act,
                           double reward, bool end) {
  observations.insert(observations.end(), obs.begin(), obs.end());
  actions.insert(actions.end(), act.begin(), act.end());
  rewards.push_back(reward);
  episode_end.push_back(end ? 1 : 0);
}

ReturnsAndAdvantages compute_returns_and_advantages(const TrajectoryBatch& batch,
                                                    const PolicyParams& params, double gamma) {
  const int n = batch.size();
  ReturnsAndAdvantages out;
  out.returns.assign(n, 0.0);
  out.advantages.assign(n, 0.0);
  double running = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    if (batch.episode_end[t]) running = 0.0;
    running = batch.rewards[t] + gamma * running;
    out.returns[t] = running;
  }
  for (int t = 0; t < n; ++t) {
    out.advantages[t] = out.returns[t] - forward_critic(params, batch.observation(t));
  }
  return out;
}

std::pair<LossBreakdown, Gradients> loss_and_gradients(const PolicyParams& params,
                                                       const TrajectoryBatch& batch,
                                                       const ReturnsAndAdvantages& targets,
                                                       const TrainConfig& config) {
  const int n = batch.size();
  if (n == 0) throw UsageError("loss_and_gradients needs a non-empty batch");
  const double inv_n = 1.0 / n;

  LossBreakdown loss;
  Gradients grads;
  grads.actor.assign(params.actor.param_count(), 0.0);
  grads.critic.assign(params.critic.param_count(), 0.0);

  Mlp::Activations actor_acts;
  Mlp::Activations critic_acts;
  std::vector<double> grad_logits(params.actor.output_size());
  std::vector<double> grad_value(1);

  for (int t = 0; t < n; ++t) {
    const auto obs = batch.observation(t);
    const auto act = batch.action(t);
    const double advantage = targets.advantages[t];

    params.actor.forward(obs, actor_acts);
    const auto logits = actor_acts.output();
    double log_prob = 0.0;
    double entropy = 0.0;
    for (std::size_t b = 0; b < logits.size(); ++b) {
      const double z = logits[b];
      const double p = sigmoid(z);
      const double a = act[b] ? 1.0 : 0.0;
      log_prob += a * z - softplus(z);
      entropy += bernoulli_entropy(z);
      grad_logits[b] = inv_n * (-advantage * (a - p) + config.entropy_coef * z * p * (1.0 - p));
    }
    loss.policy -= inv_n * advantage * log_prob;
    loss.entropy += inv_n * entropy;
    params.actor.backward(actor_acts, grad_logits, grads.actor);

    params.critic.forward(obs, critic_acts);
    const double value = critic_acts.output()[0];
    const double err = value - targets.returns[t];
    loss.value += config.value_loss_coef * inv_n * err * err;
    grad_value[0] = 2.0 * config.value_loss_coef * inv_n * err;
    params.critic.backward(critic_acts, grad_value, grads.critic);
  }
  loss.total = loss.policy + loss.value - config.entropy_coef * loss.entropy;
  if (!std::isfinite(loss.total)) {
    std::ostringstream msg;
    msg << "non-finite loss (policy=" << loss.policy << ", value=" << loss.value
        << ", entropy=" << loss.entropy << ")";
    throw TrainingError(msg.str());
  }
  return {loss, grads};
}

double lr_schedule(int iteration, const TrainConfig& config) {
  return config.lr0 * std::pow(config.lr_decay, iteration / config.lr_decay_every);
}

void update(PolicyParams& params, const Gradients& grads, double step_size,
            OptimizerKind optimizer) {
  const std::size_t na = params.actor.param_count();
  const std::size_t total = params.param_count();
  if (grads.actor.size() != na || grads.critic.size() != params.critic.param_count()) {
    throw ConfigError("gradient shapes do not match parameters");
  }
  std::vector<double> next(total);
  auto param_at = [&](std::size_t i) -> double {
    return i < na ? params.actor.params()[i] : params.critic.params()[i - na];
  };
  auto grad_at = [&](std::size_t i) -> double {
    return i < na ? grads.actor[i] : grads.critic[i - na];
  };

  std::vector<double> m = params.first_moment;
  std::vector<double> v = params.second_moment;
  const long long steps = params.optimizer_steps + 1;
  const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(steps));
  const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(steps));
  for (std::size_t i = 0; i < total; ++i) {
    const double g = grad_at(i);
    if (optimizer == OptimizerKind::kSgd) {
      next[i] = param_at(i) - step_size * g;
    } else {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      next[i] = param_at(i) - step_size * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
    if (!std::isfinite(next[i])) {
      throw TrainingError("non-finite parameter after update at index " + std::to_string(i));
    }
  }
  std::copy(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(na),
            params.actor.params().begin());
  std::copy(next.begin() + static_cast<std::ptrdiff_t>(na), next.end(),
            params.critic.params().begin());
  if (optimizer == OptimizerKind::kAdam) {
    params.first_moment = std::move(m);
    params.second_moment = std::move(v);
  }
  params.optimizer_steps = steps;
}

InstanceSampler random_instance_sampler(const ProblemInstance& instance) {
  instance.validate();
  if (instance.num_users > instance.num_files) {
    throw ConfigError("distinct demands need N >= K");
  }
  return [instance](Rng& rng) {
    const auto cache = random_prefetch(instance, rng);
    const auto demands = random_distinct_demands(instance, rng);
    auto pruned = prune_to_requested(instance, cache, demands);
    return EpisodeSpec{pruned.instance, std::move(pruned.cache), std::move(pruned.demands)};
  };
}

InstanceSampler fixed_instance_sampler(EpisodeSpec spec) {
  return [spec = std::move(spec)](Rng&) { return spec; };
}

namespace {

constexpr int kMaxEmptyResets = 1000;

// Resets until the episode has something to deliver. Episodes that are done
// at reset contribute a zero delay.
EnvState fresh_episode(const InstanceSampler& sampler, Rng& rng, int cap,
                       std::vector<double>& delays) {
  for (int attempt = 0; attempt < kMaxEmptyResets; ++attempt) {
    const auto spec = sampler(rng);
    auto state = reset(spec.instance, spec.cache, spec.demands, rng, cap);
    if (!state.done()) return state;
    delays.push_back(0.0);
  }
  throw ConfigError("instance sampler never produced an episode with outstanding bits");
}

}  // namespace

TrainResult train(const InstanceSampler& sampler, const TrainConfig& config,
                  const IterationCallback& on_iteration) {
  config.validate();
  Rng rng(config.seed);

  std::vector<double> delays;
  EnvState env = fresh_episode(sampler, rng, config.episode_cap, delays);
  const ProblemInstance dims = env.instance;

  TrainResult result;
  result.params = init_params(dims.num_files, dims.num_users, dims.file_bits, rng);
  PolicyParams& params = result.params;

  const int obs_size = observation_size(dims);
  const int act_size = action_size(dims);
  std::vector<double> obs(obs_size);
  std::vector<std::uint8_t> mask(act_size);
  Mlp::Activations acts;
  double last_delay = 0.0;

  for (int iter = 0; iter < config.iterations; ++iter) {
    TrajectoryBatch batch;
    batch.observation_size = obs_size;
    batch.action_size = act_size;
    delays.clear();
    double reward_sum = 0.0;
    double entropy_sum = 0.0;

    for (int s = 0; s < config.batch_steps; ++s) {
      if (env.instance != dims) throw ConfigError("instance sampler changed dimensions");
      observe_into(env, obs);
      params.actor.forward(obs, acts);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      Action action;
      for (int b = 0; b < act_size; ++b) {
        const double z = acts.output()[b];
        entropy_sum += bernoulli_entropy(z);
        mask[b] = unit(rng) < sigmoid(z) ? 1 : 0;
        if (mask[b]) action.selected.push_back(b);
      }
      const auto outcome = step(env, action, rng);
      reward_sum += outcome.reward;
      const bool last = s + 1 == config.batch_steps;
      batch.push(obs, mask, outcome.reward, outcome.done || last);
      if (outcome.done) {
        delays.push_back(normalized_delay(env).delay);
        env = fresh_episode(sampler, rng, config.episode_cap, delays);
      }
    }

    const auto targets = compute_returns_and_advantages(batch, params, config.gamma);
    auto [loss, grads] = loss_and_gradients(params, batch, targets, config);
    const double lr = lr_schedule(iter, config);
    update(params, grads, lr, config.optimizer);
    params.iteration = iter + 1;

    CurveRecord rec;
    rec.iteration = iter;
    if (!delays.empty()) {
      last_delay = std::accumulate(delays.begin(), delays.end(), 0.0) / delays.size();
    }
    rec.mean_delay = last_delay;
    rec.mean_reward = reward_sum / config.batch_steps;
    rec.mean_entropy = entropy_sum / config.batch_steps;
    rec.lr = lr;
    result.curve.push_back(rec);
    if (on_iteration) on_iteration(rec);
  }
  return result;
}

DelayResult run_episode(const PolicyParams& params, const EpisodeSpec& spec, EvalMode mode,
                        Rng& rng, int episode_cap, std::vector<TraceRecord>* trace) {
  auto state = reset(spec.instance, spec.cache, spec.demands, rng, episode_cap);
  if (state.instance.total_bits() != params.dims.total_bits() ||
      state.instance.num_users != params.dims.num_users) {
    throw ConfigError("episode dimensions do not match the policy network");
  }
  std::vector<double> obs(observation_size(state.instance));
  while (!state.done()) {
    observe_into(state, obs);
    const auto probs = forward_actor(params, obs);
    const Action action =
        mode == EvalMode::kGreedy ? greedy_action(probs) : sample_action(probs, rng);
    auto outcome = step(state, action, rng);
    if (trace) {
      trace->push_back(TraceRecord{state.t, std::move(outcome.packet),
                                   std::move(outcome.deliveries), outcome.delivered_count,
                                   outcome.reward});
    }
  }
  return normalized_delay(state);
}

EvalResult evaluate(const PolicyParams& params, const std::vector<EpisodeSpec>& episodes,
                    EvalMode mode, std::uint64_t seed, int episode_cap) {
  Rng rng(seed);
  EvalResult r;
  for (const auto& spec : episodes) {
    const auto d = run_episode(params, spec, mode, rng, episode_cap);
    r.delays.push_back(d.delay);
    r.capped_flags.push_back(d.capped ? 1 : 0);
    if (d.capped) ++r.capped;
  }
  if (!r.delays.empty()) {
    const double n = static_cast<double>(r.delays.size());
    r.mean_delay = std::accumulate(r.delays.begin(), r.delays.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : r.delays) ss += (d - r.mean_delay) * (d - r.mean_delay);
    r.std_delay = std::sqrt(ss / n);
  }
  return r;
}

void save_checkpoint(std::ostream& out, const PolicyParams& params) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "dims " << params.dims.num_files << ' ' << params.dims.num_users << ' '
      << params.dims.file_bits << '\n';
  auto widths = [&](const char* name, const Mlp& net) {
    out << name;
    for (int w : net.widths()) out << ' ' << w;
    out << '\n';
  };
  widths("actor", params.actor);
  widths("critic", params.critic);
  out << "iteration " << params.iteration << '\n';
  out << std::setprecision(17);
  auto values = [&](const Mlp& net) {
    int col = 0;
    for (double v : net.params()) {
      out << v << (++col % 8 == 0 ? '\n' : ' ');
    }
    out << '\n';
  };
  values(params.actor);
  values(params.critic);
}

PolicyParams load_checkpoint(std::istream& in) {
  auto fail = [](const std::string& what) -> ConfigError {
    return ConfigError("bad checkpoint: " + what);
  };
  std::string token;
  int version = 0;
  if (!(in >> token >> version) || token != kCheckpointMagic) throw fail("missing header");
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  int n = 0, k = 0, f = 0;
  if (!(in >> token >> n >> k >> f) || token != "dims") throw fail("missing dims line");
  PolicyParams p = zero_params(n, k, f);

  auto expect_widths = [&](const char* name, const Mlp& net) {
    if (!(in >> token) || token != name) throw fail(std::string("missing ") + name + " line");
    for (int expected : net.widths()) {
      int w = 0;
      if (!(in >> w) || w != expected) throw fail(std::string(name) + " layer sizes mismatch");
    }
  };
  expect_widths("actor", p.actor);
  expect_widths("critic", p.critic);
  if (!(in >> token >> p.iteration) || token != "iteration") throw fail("missing iteration");

  auto read_values = [&](Mlp& net) {
    for (double& v : net.params()) {
      if (!(in >> v)) throw fail("truncated parameter list");
      if (!std::isfinite(v)) throw fail("non-finite parameter");
    }
  };
  read_values(p.actor);
  read_values(p.critic);
  return p;
}

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save_checkpoint(out, params);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace codedcache
