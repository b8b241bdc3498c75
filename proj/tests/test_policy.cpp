#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "codedcache/policy.hpp"
#include "policy_oracle.hpp"
#include "test_support.hpp"

namespace codedcache {
namespace {

TrajectoryBatch single_episode_batch(const std::vector<double>& rewards) {
  TrajectoryBatch b;
  b.observation_size = observation_size(ProblemInstance{2, 2, 2, 0});
  b.action_size = action_size(ProblemInstance{2, 2, 2, 0});
  std::vector<double> obs(b.observation_size, 0.0);
  std::vector<std::uint8_t> act(b.action_size, 0);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    b.push(obs, act, rewards[t], t + 1 == rewards.size());
  }
  return b;
}

TEST(InitParams, ShapesFollowDimensions) {
  Rng rng(1);
  const auto p = init_params(4, 4, 2, rng);
  EXPECT_EQ(p.actor.widths(), (std::vector<int>{96, 32, 32, 8}));
  EXPECT_EQ(p.critic.widths(), (std::vector<int>{96, 32, 32, 1}));
  EXPECT_EQ(p.actor.param_count(), 96u * 32 + 32 + 32 * 32 + 32 + 32 * 8 + 8);
  EXPECT_EQ(p.first_moment.size(), p.param_count());
  EXPECT_EQ(p.iteration, 0);
}

TEST(InitParams, SeedDeterminesWeights) {
  Rng a(5), b(5), c(6);
  const auto pa = init_params(2, 2, 2, a);
  EXPECT_EQ(pa.actor, init_params(2, 2, 2, b).actor);
  EXPECT_NE(pa.actor, init_params(2, 2, 2, c).actor);
  for (int l = 0; l < pa.actor.num_layers(); ++l) {
    const double limit = 1.0 / std::sqrt(pa.actor.widths()[l]);
    for (std::size_t i = pa.actor.weight_offset(l); i < pa.actor.bias_offset(l); ++i) {
      EXPECT_LE(std::abs(pa.actor.params()[i]), limit);
    }
  }
}

TEST(Forward, ZeroWeightsGiveHalfAndZeroValue) {
  const auto p = zero_params(2, 2, 2);
  const std::vector<double> obs(24, 1.0);
  for (double q : forward_actor(p, obs)) EXPECT_DOUBLE_EQ(q, 0.5);
  EXPECT_DOUBLE_EQ(forward_critic(p, obs), 0.0);
  EXPECT_THROW(forward_actor(p, std::vector<double>(23)), ConfigError);
}

TEST(Forward, MatchesReferenceImplementation) {
  Rng rng(17);
  const auto p = init_params(3, 2, 2, rng);
  std::vector<double> obs(observation_size(ProblemInstance{3, 2, 2, 0}));
  for (double& o : obs) o = static_cast<double>(rng() & 1u);
  const auto logits = testing::reference_forward(p.actor.widths(), p.actor.params(), obs);
  const auto probs = forward_actor(p, obs);
  ASSERT_EQ(probs.size(), logits.size());
  for (std::size_t b = 0; b < probs.size(); ++b) {
    EXPECT_NEAR(probs[b], 1.0 / (1.0 + std::exp(-logits[b])), 1e-14);
  }
  EXPECT_NEAR(forward_critic(p, obs),
              testing::reference_forward(p.critic.widths(), p.critic.params(), obs)[0], 1e-14);
}

TEST(SampleAction, FrequenciesMatchProbabilities) {
  const std::vector<double> probs{0.0, 1.0, 0.25, 0.8};
  Rng rng(3);
  const int draws = 20000;
  std::vector<int> hits(4, 0);
  for (int i = 0; i < draws; ++i)
    for (int b : sample_action(probs, rng).selected) ++hits[b];
  EXPECT_EQ(hits[0], 0);
  EXPECT_EQ(hits[1], draws);
  for (int b : {2, 3}) {
    const double sigma = std::sqrt(probs[b] * (1 - probs[b]) / draws);
    EXPECT_NEAR(static_cast<double>(hits[b]) / draws, probs[b], 4 * sigma);
  }
  EXPECT_EQ(greedy_action(probs).selected, (std::vector<int>{1, 3}));
  EXPECT_TRUE(greedy_action(std::vector<double>{0.5, 0.5}).selected.empty());
}

TEST(Returns, DiscountWithinEpisode) {
  const auto zero = zero_params(2, 2, 2);
  const auto r = compute_returns_and_advantages(single_episode_batch({1.0, 1.0}), zero, 0.99);
  EXPECT_DOUBLE_EQ(r.returns[0], 1.99);
  EXPECT_DOUBLE_EQ(r.returns[1], 1.0);
  EXPECT_EQ(r.advantages, r.returns);
}

TEST(Returns, StopAtEpisodeBoundaries) {
  TrajectoryBatch b = single_episode_batch({1.0});
  const auto second = single_episode_batch({-1.0, 2.0});
  for (int t = 0; t < second.size(); ++t)
    b.push(second.observation(t), second.action(t), second.rewards[t], second.episode_end[t]);
  const auto r = compute_returns_and_advantages(b, zero_params(2, 2, 2), 0.5);
  EXPECT_DOUBLE_EQ(r.returns[0], 1.0);
  EXPECT_DOUBLE_EQ(r.returns[1], 0.0);
  EXPECT_DOUBLE_EQ(r.returns[2], 2.0);
}

TEST(Loss, ZeroAdvantagesAndEntropyLeaveActorUntouched) {
  Rng rng(2);
  auto c = testing::random_gradient_case(rng);
  std::fill(c.targets.advantages.begin(), c.targets.advantages.end(), 0.0);
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  const auto [loss, grads] = loss_and_gradients(c.params, c.batch, c.targets, cfg);
  for (double g : grads.actor) EXPECT_EQ(g, 0.0);
  EXPECT_DOUBLE_EQ(loss.policy, 0.0);
  EXPECT_GT(*std::max_element(grads.critic.begin(), grads.critic.end()), 0.0);
}

TEST(Loss, UniformPolicyHasMaximalEntropy) {
  const auto p = zero_params(2, 2, 2);
  const auto batch = single_episode_batch({0.0, 0.0, 0.0});
  const auto targets = compute_returns_and_advantages(batch, p, 0.99);
  const auto [loss, grads] = loss_and_gradients(p, batch, targets, TrainConfig{});
  EXPECT_NEAR(loss.entropy, 4 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(loss.total, -0.05 * 4 * std::numbers::ln2, 1e-12);
}

TEST(Loss, EmptyBatchIsAUsageError) {
  TrajectoryBatch empty;
  EXPECT_THROW(loss_and_gradients(zero_params(2, 2, 2), empty, {}, TrainConfig{}), UsageError);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(404);
  TrainConfig cfg;
  for (int i = 0; i < 5; ++i) {
    const auto c = testing::random_gradient_case(rng);
    const auto check = testing::check_gradients(c.params, c.batch, c.targets, cfg, 1e-5);
    EXPECT_LT(check.loss_mismatch, 1e-10);
    EXPECT_LT(check.max_relative_error, 1e-4);
  }
}

TEST(LrSchedule, StepDecay) {
  EXPECT_DOUBLE_EQ(lr_schedule(0), 5e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(99), 5e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(100), 4.5e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(250), 5e-3 * 0.81);
  for (int i = 0; i <= 1000; ++i) {
    EXPECT_EQ(lr_schedule(i), 5e-3 * std::pow(0.9, i / 100)) << i;
  }
}

TEST(Update, ZeroGradientIsANoOp) {
  Rng rng(1);
  auto p = init_params(2, 2, 2, rng);
  const auto before = p;
  Gradients g{std::vector<double>(p.actor.param_count(), 0.0),
              std::vector<double>(p.critic.param_count(), 0.0)};
  update(p, g, 1e-2);
  EXPECT_EQ(p.actor, before.actor);
  EXPECT_EQ(p.critic, before.critic);
  update(p, g, 1e-2, OptimizerKind::kSgd);
  EXPECT_EQ(p.actor, before.actor);
}

TEST(Update, RejectsNonFiniteGradients) {
  auto p = zero_params(2, 2, 2);
  Gradients g{std::vector<double>(p.actor.param_count(), 0.0),
              std::vector<double>(p.critic.param_count(), 0.0)};
  g.actor[3] = std::nan("");
  EXPECT_THROW(update(p, g, 1e-2), TrainingError);
}

TEST(Update, SmallStepsReduceTheLoss) {
  Rng rng(9);
  for (int i = 0; i < 5; ++i) {
    auto c = testing::random_gradient_case(rng);
    const TrainConfig cfg;
    const auto [before, grads] = loss_and_gradients(c.params, c.batch, c.targets, cfg);
    update(c.params, grads, 1e-3, OptimizerKind::kSgd);
    const auto after = loss_and_gradients(c.params, c.batch, c.targets, cfg).first;
    EXPECT_LT(after.total, before.total);
  }
}

TEST(Train, CurveHasOneRowPerIterationAndIsReproducible) {
  TrainConfig cfg;
  cfg.iterations = 10;
  cfg.batch_steps = 50;
  cfg.seed = 4;
  const auto sampler = random_instance_sampler(ProblemInstance{3, 2, 2, 1});
  const auto a = train(sampler, cfg);
  const auto b = train(sampler, cfg);
  ASSERT_EQ(a.curve.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a.curve[i].iteration, i);
    EXPECT_EQ(a.curve[i].mean_reward, b.curve[i].mean_reward);
    EXPECT_DOUBLE_EQ(a.curve[i].lr, lr_schedule(i, cfg));
  }
  EXPECT_EQ(a.params.actor, b.params.actor);
  EXPECT_EQ(a.params.iteration, 10);
  // pruned network: N' = K = 2
  EXPECT_EQ(a.params.dims.num_files, 2);
}

TEST(Train, RejectsBadConfig) {
  TrainConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(train(fixed_instance_sampler(testing::forced_coding_spec()), cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, LearnsTheForcedCodingPacket) {
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.seed = 1;
  const auto spec = testing::forced_coding_spec();
  const auto result = train(fixed_instance_sampler(spec), cfg);
  const auto eval = evaluate(result.params, std::vector<EpisodeSpec>(100, spec), EvalMode::kGreedy, 7);
  EXPECT_LE(eval.mean_delay, 0.55);
  EXPECT_EQ(eval.capped, 0);
}

TEST(Evaluate, SilentPolicyIsCappedWithUncodedFallback) {
  const auto spec = testing::forced_coding_spec();
  const auto r = evaluate(zero_params(2, 2, 2), {spec, spec}, EvalMode::kGreedy, 1);
  EXPECT_EQ(r.capped, 2);
  EXPECT_DOUBLE_EQ(r.mean_delay, (100.0 + 2.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.std_delay, 0.0);
  EXPECT_EQ(r.capped_flags, (std::vector<std::uint8_t>{1, 1}));

  std::vector<TraceRecord> trace;
  Rng rng(1);
  run_episode(zero_params(2, 2, 2), spec, EvalMode::kGreedy, rng, 5, &trace);
  EXPECT_EQ(trace.size(), 5u);
}

TEST(Evaluate, RejectsMismatchedDimensions) {
  const auto spec = testing::forced_coding_spec();
  EXPECT_THROW(evaluate(zero_params(3, 3, 2), {spec}, EvalMode::kGreedy, 1), ConfigError);
}

TEST(Checkpoint, RoundTripsExactly) {
  Rng rng(8);
  auto p = init_params(3, 3, 2, rng);
  p.iteration = 42;
  std::stringstream ss;
  save_checkpoint(ss, p);
  const auto q = load_checkpoint(ss);
  EXPECT_EQ(q.actor, p.actor);
  EXPECT_EQ(q.critic, p.critic);
  EXPECT_EQ(q.iteration, 42);
  EXPECT_EQ(q.dims.num_users, 3);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("not-a-checkpoint 1");
  EXPECT_THROW(load_checkpoint(bad), ConfigError);

  std::stringstream ss;
  save_checkpoint(ss, zero_params(2, 2, 2));
  std::string text = ss.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_checkpoint(truncated), ConfigError);
}

TEST(Structure, ObservationAndActionLengths) {
  for (int k = 1; k <= 6; ++k)
    for (int n = k; n <= k + 2; ++n)
      for (int f = 1; f <= 4; ++f) {
        const ProblemInstance inst{n, k, f, 0};
        EXPECT_EQ(observation_size(inst), 3 * n * k * f);
        EXPECT_EQ(action_size(inst), n * f);
      }
}

}  // namespace
}  // namespace codedcache
