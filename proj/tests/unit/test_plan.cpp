// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "vgjepa/plan/plan.hpp"

using namespace vgjepa;
using namespace vgjepa::plan;
using ad::Shape;
using ad::Tensor;

namespace {

Tensor<float> row(std::initializer_list<float> v) {
  return Tensor<float>(Shape{1, v.size()}, std::vector<float>(v));
}

Tensor<float> euclid(const Tensor<float>& z, const Tensor<float>& g) {
  const std::size_t n = z.dim(0), d = z.dim(1);
  Tensor<float> out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const double e = z[i * d + k] - g[k];
      s += e * e;
    }
    out[i] = static_cast<float>(std::sqrt(s));
  }
  return out;
}

// Latent = agent position read off the rendered image (disc centroid),
// dynamics z' = z + a. A perfect model of an empty arena.
LatentModel point_model() {
  LatentModel m;
  m.encode = [](const env::Observation& o) {
    const std::size_t res = o.image.dim(1);
    const double scale = static_cast<double>(res) / 64.0;
    double w = 0, x = 0, y = 0;
    for (std::size_t r = 0; r < res; ++r)
      for (std::size_t c = 0; c < res; ++c) {
        const double v = o.image[r * res + c];
        w += v;
        x += v * (static_cast<double>(c) + 0.5) / scale;
        y += v * (static_cast<double>(r) + 0.5) / scale;
      }
    return row({static_cast<float>(x / w), static_cast<float>(y / w)});
  };
  m.predict = [](const Tensor<float>& z, const Tensor<float>& a) {
    Tensor<float> out = z;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a[i];
    return out;
  };
  m.goal_embedding = m.encode;
  m.cost = euclid;
  return m;
}

env::WallWorld test_world(std::uint64_t seed = 3) {
  env::WallConfig c;
  return env::sample_wall_world(c, seed);
}

}  // namespace

TEST(RolloutCost, ZeroAtGoalUnderIdentityDynamics) {
  LatentModel m;
  m.predict = [](const Tensor<float>& z, const Tensor<float>&) { return z; };
  m.cost = euclid;
  const auto z0 = row({0.3f, -1.2f, 2.0f});
  EXPECT_EQ(rollout_cost(m, z0, Tensor<float>(Shape{7, 2}), z0), 0.0);
}

TEST(RolloutCost, SingleStepIsOneDistance) {
  LatentModel m = point_model();
  const auto z0 = row({1.0f, 1.0f}), g = row({4.0f, 5.0f});
  const Tensor<float> a(Shape{1, 2}, {0.5f, -1.0f});
  EXPECT_NEAR(rollout_cost(m, z0, a, g), std::hypot(4.0 - 1.5, 5.0 - 0.0), 1e-6);
  EXPECT_THROW(rollout_cost(m, z0, Tensor<float>(Shape{3}), g), DataError);
}

TEST(RolloutCost, SumsUniformWeightsOverHorizon) {
  LatentModel m = point_model();
  const auto z0 = row({0.0f, 0.0f}), g = row({10.0f, 0.0f});
  const Tensor<float> a(Shape{3, 2}, {1, 0, 1, 0, 1, 0});
  EXPECT_NEAR(rollout_cost(m, z0, a, g), 9.0 + 8.0 + 7.0, 1e-6);
}

TEST(RolloutCost, GridSearchAgreesWithGoalDirection) {
  LatentModel m = point_model();
  const auto z0 = row({2.0f, 3.0f}), g = row({5.0f, -1.0f});
  const double bound = 1.8;
  // 100 x 100 candidate actions over the bounding box of the action disc.
  double best = 1e300;
  env::Vec2 arg;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j) {
      env::Vec2 a{-bound + 2 * bound * i / 99.0, -bound + 2 * bound * j / 99.0};
      if (a.norm() > bound) continue;
      const Tensor<float> t(Shape{1, 2}, {static_cast<float>(a.x), static_cast<float>(a.y)});
      const double c = rollout_cost(m, z0, t, g);
      if (c < best) {
        best = c;
        arg = a;
      }
    }
  const env::Vec2 toward = env::clip_norm({3.0, -4.0}, bound);
  const Tensor<float> t(Shape{1, 2}, {static_cast<float>(toward.x), static_cast<float>(toward.y)});
  EXPECT_LE(rollout_cost(m, z0, t, g), best + 1e-6);
  EXPECT_LT(env::distance(arg, toward), 2 * 2 * bound / 99.0);
}

TEST(MppiWeights, NormalizedAndShiftInvariant) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> c(17), shifted(17);
    for (std::size_t i = 0; i < c.size(); ++i) {
      // Dyadic costs keep the shifted differences exact.
      c[i] = std::ldexp(std::floor(uniform(rng, 0, 4096)), -10);
      shifted[i] = c[i] + 1024.0;
    }
    const double lambda = uniform(rng, 0.01, 2.0);
    const auto w = mppi_weights(c, lambda);
    const auto ws = mppi_weights(shifted, lambda);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(w, ws);
  }
}

TEST(MppiWeights, SoftmaxArithmetic) {
  const auto eq = mppi_weights({3.0, 3.0}, 0.005);
  EXPECT_DOUBLE_EQ(eq[0], 0.5);
  EXPECT_DOUBLE_EQ(eq[1], 0.5);
  const double lambda = 0.005;
  const auto w = mppi_weights({1.0, 1.0 + lambda * std::log(2.0)}, lambda);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-12);
  const auto one = mppi_weights({42.0}, 1.0);
  EXPECT_EQ(one[0], 1.0);
}

TEST(MppiWeights, NonFiniteCosts) {
  const auto w = mppi_weights({NAN, 1.0, INFINITY}, 1.0);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[1], 1.0);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_THROW(mppi_weights({NAN, NAN}, 1.0), NumericError);
  EXPECT_THROW(mppi_weights({1.0}, 0.0), ConfigError);
}

TEST(MppiStep, SingleSampleBecomesTheMean) {
  PlanConfig cfg;
  cfg.num_samples = 1;
  cfg.sigma = 0.7;
  cfg.action_bound = 5.0;
  Tensor<float> seen;
  const SequenceCost cost = [&](const Tensor<float>& s) {
    seen = s;
    return std::vector<double>{1.0};
  };
  Rng rng = make_rng(1);
  const auto out = mppi_step(cost, Tensor<float>(Shape{4, 2}), cfg, rng);
  ASSERT_EQ(seen.size(), out.mean.size());
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(out.mean[i], seen[i]);
}

TEST(MppiStep, SamplesRespectActionBound) {
  PlanConfig cfg;
  cfg.num_samples = 300;
  cfg.sigma = 12.0;
  cfg.action_bound = 1.8;
  Tensor<float> seen;
  const SequenceCost cost = [&](const Tensor<float>& s) {
    seen = s;
    return std::vector<double>(s.dim(0), 0.0);
  };
  Rng rng = make_rng(2);
  mppi_step(cost, Tensor<float>(Shape{6, 2}), cfg, rng);
  for (std::size_t i = 0; i < seen.size(); i += 2)
    EXPECT_LE(std::hypot(seen[i], seen[i + 1]), 1.8 + 1e-6);
}

TEST(MppiStep, ZeroTemperatureSelectsArgmin) {
  PlanConfig cfg;
  cfg.num_samples = 64;
  cfg.sigma = 1.0;
  cfg.lambda = 1e-9;
  cfg.action_bound = 10.0;
  Tensor<float> seen;
  const SequenceCost cost = [&](const Tensor<float>& s) {
    seen = s;
    std::vector<double> c(s.dim(0));
    for (std::size_t i = 0; i < c.size(); ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < s.dim(1) * 2; ++j) acc += std::abs(s[i * s.dim(1) * 2 + j] - 0.3);
      c[i] = acc;
    }
    return c;
  };
  Rng rng = make_rng(6);
  const auto out = mppi_step(cost, Tensor<float>(Shape{5, 2}), cfg, rng);
  const std::size_t best = out.best_index;
  EXPECT_EQ(out.best_cost, *std::min_element(out.costs.begin(), out.costs.end()));
  for (std::size_t j = 0; j < 10; ++j) EXPECT_FLOAT_EQ(out.mean[j], seen[best * 10 + j]);
}

TEST(MppiStep, ConvexQuadraticConverges) {
  const std::size_t H = 8;
  Rng trng = make_rng(11);
  std::vector<double> target(2 * H);
  for (auto& t : target) t = uniform(trng, -0.7, 0.7);
  auto quad = [&](const float* a) {
    double s = 0;
    for (std::size_t j = 0; j < 2 * H; ++j) s += (a[j] - target[j]) * (a[j] - target[j]);
    return s;
  };
  const SequenceCost cost = [&](const Tensor<float>& s) {
    std::vector<double> c(s.dim(0));
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = quad(s.ptr() + i * 2 * H);
    return c;
  };
  PlanConfig cfg;
  cfg.num_samples = 500;
  cfg.sigma = 0.3;
  cfg.lambda = 0.05;
  cfg.action_bound = 2.0;
  Rng rng = make_rng(12);
  Tensor<float> mean(Shape{H, 2});
  const double initial = quad(mean.ptr());
  double prev = initial;
  // Far from the optimum every iteration descends; near it the mean jitters
  // at the sampling noise floor.
  for (int it = 0; it < 30; ++it) {
    mean = mppi_step(cost, mean, cfg, rng).mean;
    const double c = quad(mean.ptr());
    if (it < 4) EXPECT_LT(c, prev) << "iteration " << it;
    prev = c;
  }
  EXPECT_LT(prev, 0.1 * initial);
}

TEST(MppiStep, RejectsBadInputs) {
  PlanConfig cfg;
  cfg.num_samples = 0;
  Rng rng = make_rng(0);
  const SequenceCost cost = [](const Tensor<float>& s) { return std::vector<double>(s.dim(0), 0.0); };
  EXPECT_THROW(mppi_step(cost, Tensor<float>(Shape{2, 2}), cfg, rng), ConfigError);
  cfg.num_samples = 2;
  const SequenceCost nan = [](const Tensor<float>& s) { return std::vector<double>(s.dim(0), NAN); };
  EXPECT_THROW(mppi_step(nan, Tensor<float>(Shape{2, 2}), cfg, rng), NumericError);
}

TEST(PlanConfig, Defaults) {
  const auto ws = PlanConfig::defaults(data::Regime::kWS);
  EXPECT_EQ(ws.horizon, 96u);
  EXPECT_EQ(ws.total_steps, 200u);
  EXPECT_EQ(ws.num_samples, 2000u);
  EXPECT_EQ(ws.sigma, 12.0);
  EXPECT_EQ(ws.lambda, 0.005);
  const auto wb = PlanConfig::defaults(data::Regime::kWB);
  EXPECT_EQ(wb.horizon, 64u);
  EXPECT_EQ(wb.total_steps, 64u);
  EXPECT_EQ(wb.num_samples, 2000u);
  const auto mz = PlanConfig::defaults(data::Regime::kMaze);
  EXPECT_EQ(mz.horizon, 100u);
  EXPECT_EQ(mz.total_steps, 200u);
  EXPECT_EQ(mz.num_samples, 500u);
  EXPECT_EQ(mz.sigma, 5.0);
  EXPECT_EQ(mz.lambda, 0.0025);
  for (const auto& c : {ws, wb, mz}) {
    EXPECT_EQ(c.replan_interval, 1u);
    EXPECT_EQ(c.burn_in_iterations, 10u);
    EXPECT_EQ(c.iterations_per_replan, 1u);
  }
  nlohmann::json j = ws;
  nlohmann::json back = j.get<PlanConfig>();
  EXPECT_EQ(back, j);
  EXPECT_THROW(nlohmann::json({{"lambda", 0.0}}).get<PlanConfig>(), ConfigError);
}

TEST(EnvInstance, JsonRoundTrip) {
  const EnvInstance w(test_world());
  const auto back = EnvInstance::from_json(w.to_json());
  EXPECT_FALSE(back.is_maze());
  EXPECT_EQ(back.to_json(), w.to_json());
  env::MazeConfig mc;
  const EnvInstance m(env::sample_maze_world(mc, 4, env::MazeSplit::kEval));
  EXPECT_TRUE(EnvInstance::from_json(m.to_json()).is_maze());
  EXPECT_THROW(EnvInstance::from_json(nlohmann::json{{"env", "moon"}, {"world", {}}}), DataError);
}

TEST(MpcPlan, StartAtGoalSucceedsImmediately) {
  const EnvInstance env(test_world());
  const data::Pose p{10.0, 10.0, 0.0, 0.0};
  const auto r = mpc_plan(env, point_model(), p, p, PlanConfig::defaults(data::Regime::kWS), 0);
  EXPECT_TRUE(r.success);
  ASSERT_TRUE(r.steps_to_goal.has_value());
  EXPECT_EQ(*r.steps_to_goal, 0u);
  EXPECT_TRUE(r.actions.empty());
}

TEST(MpcPlan, ExhaustedBudgetFails) {
  const EnvInstance env(test_world());
  LatentModel flat = point_model();
  flat.cost = [](const Tensor<float>& z, const Tensor<float>&) { return Tensor<float>(Shape{z.dim(0)}); };
  PlanConfig cfg;
  cfg.total_steps = 6;
  cfg.horizon = 4;
  cfg.num_samples = 8;
  const auto r = mpc_plan(env, flat, {8, 8, 0, 0}, {8, 56, 0, 0}, cfg, 1);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(r.steps_to_goal.has_value());
  EXPECT_EQ(r.actions.size(), 6u);
  EXPECT_EQ(r.trace.size(), 7u);
  EXPECT_GT(r.min_goal_distance(), r.threshold);
}

TEST(MpcPlan, HorizonCappedAtRemainingBudget) {
  const EnvInstance env(test_world());
  LatentModel m = point_model();
  std::vector<std::size_t> horizons;
  std::size_t calls = 0;
  auto base = m.predict;
  m.predict = [&](const Tensor<float>& z, const Tensor<float>& a) {
    ++calls;
    return base(z, a);
  };
  m.cost = [](const Tensor<float>& z, const Tensor<float>&) { return Tensor<float>(Shape{z.dim(0)}); };
  PlanConfig cfg;
  cfg.total_steps = 5;
  cfg.horizon = 96;
  cfg.num_samples = 4;
  mpc_plan(env, m, {8, 8, 0, 0}, {8, 56, 0, 0}, cfg, 2);
  // Burn-in of 10 iterations over 5 steps, then one iteration each over 4, 3, 2, 1.
  EXPECT_EQ(calls, 10u * 5 + 4 + 3 + 2 + 1);
}

TEST(MpcPlan, ReachesGoalsWithoutWallInBetween) {
  PlanConfig cfg;
  cfg.horizon = 16;
  cfg.total_steps = 120;
  cfg.num_samples = 200;
  cfg.sigma = 12.0;
  cfg.lambda = 0.005;
  cfg.action_bound = 1.8;
  int successes = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto world = test_world(100 + i);
    Rng rng = make_rng(i);
    const auto s = env::sample_wall_position(world, rng, -1);
    const auto g = env::sample_wall_position(world, rng, -1);
    const auto r = mpc_plan(EnvInstance(world), point_model(), {s.x, s.y, 0, 0}, {g.x, g.y, 0, 0},
                            cfg, i);
    if (r.success) ++successes;
    EXPECT_EQ(r.success, r.min_goal_distance() <= r.threshold);
  }
  EXPECT_GE(successes, 9);
}

TEST(MpcPlan, ReplayDeterminismAndJson) {
  const EnvInstance env(test_world(7));
  PlanConfig cfg;
  cfg.horizon = 8;
  cfg.total_steps = 15;
  cfg.num_samples = 32;
  cfg.action_bound = 1.8;
  const data::Pose s{6, 6, 0, 0}, g{20, 30, 0, 0};
  const auto a = mpc_plan(env, point_model(), s, g, cfg, 9);
  const auto b = mpc_plan(EnvInstance::from_json(env.to_json()), point_model(), s, g, cfg, 9);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  const auto c = mpc_plan(env, point_model(), s, g, cfg, 10);
  EXPECT_NE(a.to_json().dump(), c.to_json().dump());
  const auto back = PlanResult::from_json(a.to_json());
  EXPECT_EQ(back.to_json(), a.to_json());
  EXPECT_EQ(a.replan_costs.size(), a.actions.size());
}

TEST(MpcPlan, IllegalPosesRejected) {
  const auto world = test_world();
  const EnvInstance env(world);
  const data::Pose inside_wall{world.wall_x(), 1.0, 0, 0};
  EXPECT_THROW(mpc_plan(env, point_model(), inside_wall, {8, 8, 0, 0}, PlanConfig{}, 0), DataError);
}
