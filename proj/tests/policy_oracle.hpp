#pragma once

// Reference loss for gradient checks. Deliberately shares no code with the
// library's network: it re-derives the forward pass from the documented flat
// parameter layout (per layer: out x in row-major weights, then biases).

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "codedcache/policy.hpp"

namespace codedcache::testing {

inline std::vector<double> reference_forward(const std::vector<int>& widths,
                                             std::span<const double> flat,
                                             std::span<const double> input) {
  std::vector<double> x(input.begin(), input.end());
  std::size_t off = 0;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    const std::size_t bias = off + static_cast<std::size_t>(in) * out;
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
      double s = flat[bias + o];
      for (int i = 0; i < in; ++i) s += flat[off + static_cast<std::size_t>(o) * in + i] * x[i];
      y[o] = l + 1 < layers ? std::tanh(s) : s;
    }
    off = bias + out;
    x = std::move(y);
  }
  return x;
}

inline double reference_loss(const Mlp& actor, std::span<const double> actor_flat,
                             const Mlp& critic, std::span<const double> critic_flat,
                             const TrajectoryBatch& batch, const ReturnsAndAdvantages& targets,
                             const TrainConfig& config) {
  const int n = batch.size();
  double policy = 0.0, value = 0.0, entropy = 0.0;
  for (int t = 0; t < n; ++t) {
    const auto logits = reference_forward(actor.widths(), actor_flat, batch.observation(t));
    const auto act = batch.action(t);
    for (std::size_t b = 0; b < logits.size(); ++b) {
      const double p = 1.0 / (1.0 + std::exp(-logits[b]));
      policy += (act[b] ? std::log(p) : std::log(1.0 - p)) * targets.advantages[t];
      entropy += -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
    }
    const double v = reference_forward(critic.widths(), critic_flat, batch.observation(t))[0];
    value += (targets.returns[t] - v) * (targets.returns[t] - v);
  }
  return (-policy + config.value_loss_coef * value - config.entropy_coef * entropy) / n;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  double loss_mismatch = 0.0;
};

// Relative error |a - n| / max(|a|, |n|, floor) with the floor keeping
// vanishing components from dominating through round-off.
inline constexpr double kRelativeErrorFloor = 1e-6;

inline GradientCheck check_gradients(const PolicyParams& params, const TrajectoryBatch& batch,
                                     const ReturnsAndAdvantages& targets,
                                     const TrainConfig& config, double eps) {
  const auto [loss, grads] = loss_and_gradients(params, batch, targets, config);
  GradientCheck out;
  std::vector<double> a(params.actor.params().begin(), params.actor.params().end());
  std::vector<double> c(params.critic.params().begin(), params.critic.params().end());
  out.loss_mismatch =
      std::abs(loss.total - reference_loss(params.actor, a, params.critic, c, batch, targets, config));
  auto compare = [&](std::vector<double>& flat, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double keep = flat[i];
      flat[i] = keep + eps;
      const double up = reference_loss(params.actor, a, params.critic, c, batch, targets, config);
      flat[i] = keep - eps;
      const double down = reference_loss(params.actor, a, params.critic, c, batch, targets, config);
      flat[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic[i]), kRelativeErrorFloor});
      out.max_relative_error = std::max(out.max_relative_error, std::abs(numeric - analytic[i]) / denom);
    }
  };
  compare(a, grads.actor);
  compare(c, grads.critic);
  return out;
}

// Freshly initialized parameters with random biases, and random observations,
// actions and rewards for an N = K = 2, F = 2 net.
struct GradientCase {
  PolicyParams params;
  TrajectoryBatch batch;
  ReturnsAndAdvantages targets;
};

inline GradientCase random_gradient_case(Rng& rng, int steps = 6) {
  GradientCase g;
  g.params = init_params(2, 2, 2, rng);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  for (Mlp* net : {&g.params.actor, &g.params.critic}) {
    for (int l = 0; l < net->num_layers(); ++l) {
      for (int o = 0; o < net->widths()[l + 1]; ++o) net->params()[net->bias_offset(l) + o] = bias(rng);
    }
  }
  const ProblemInstance dims{2, 2, 2, 0};
  g.batch.observation_size = observation_size(dims);
  g.batch.action_size = action_size(dims);
  std::vector<double> obs(g.batch.observation_size);
  std::vector<std::uint8_t> act(g.batch.action_size);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  for (int t = 0; t < steps; ++t) {
    for (double& o : obs) o = static_cast<double>(rng() & 1u);
    for (auto& x : act) x = static_cast<std::uint8_t>(rng() & 1u);
    g.batch.push(obs, act, reward(rng), t == steps - 1 || rng() % 3 == 0);
  }
  g.targets = compute_returns_and_advantages(g.batch, g.params, 0.9);
  return g;
}

}  // namespace codedcache::testing
