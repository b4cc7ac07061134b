// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/plan/plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vgjepa::plan {

using ad::Shape;
using nlohmann::json;

void PlanConfig::validate() const {
  if (horizon == 0) throw ConfigError("plan horizon must be positive");
  if (num_samples == 0) throw ConfigError("num_samples must be at least 1");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be nonnegative");
  if (!(lambda > 0.0)) throw ConfigError("temperature lambda must be positive");
  if (!(action_bound > 0.0)) throw ConfigError("action_bound must be positive");
  if (replan_interval == 0) throw ConfigError("replan_interval must be positive");
  if (burn_in_iterations == 0 || iterations_per_replan == 0)
    throw ConfigError("MPPI iteration counts must be positive");
}

PlanConfig PlanConfig::defaults(data::Regime r) {
  PlanConfig c;
  switch (r) {
    case data::Regime::kWS:
      c.action_bound = data::wall_norms(r).hi;
      break;
    case data::Regime::kWB:
      c.horizon = 64;
      c.total_steps = 64;
      c.action_bound = data::wall_norms(r).hi;
      break;
    case data::Regime::kMaze:
      c.horizon = 100;
      c.total_steps = 200;
      c.num_samples = 500;
      c.sigma = 5.0;
      c.lambda = 0.0025;
      c.action_bound = 5.0;
      break;
  }
  return c;
}

void to_json(json& j, const PlanConfig& c) {
  j = json{{"horizon", c.horizon},
           {"total_steps", c.total_steps},
           {"num_samples", c.num_samples},
           {"sigma", c.sigma},
           {"lambda", c.lambda},
           {"action_bound", c.action_bound},
           {"replan_interval", c.replan_interval},
           {"burn_in_iterations", c.burn_in_iterations},
           {"iterations_per_replan", c.iterations_per_replan},
           {"cap_horizon", c.cap_horizon}};
}

void from_json(const json& j, PlanConfig& c) {
  PlanConfig d = c;
  d.horizon = j.value("horizon", d.horizon);
  d.total_steps = j.value("total_steps", d.total_steps);
  d.num_samples = j.value("num_samples", d.num_samples);
  d.sigma = j.value("sigma", d.sigma);
  d.lambda = j.value("lambda", d.lambda);
  d.action_bound = j.value("action_bound", d.action_bound);
  d.replan_interval = j.value("replan_interval", d.replan_interval);
  d.burn_in_iterations = j.value("burn_in_iterations", d.burn_in_iterations);
  d.iterations_per_replan = j.value("iterations_per_replan", d.iterations_per_replan);
  d.cap_horizon = j.value("cap_horizon", d.cap_horizon);
  d.validate();
  c = d;
}

bool EnvInstance::legal(env::Vec2 p) const {
  return is_maze() ? maze().legal(p) : wall().legal(p);
}

data::Pose EnvInstance::step(const data::Pose& p, env::Vec2 action) const {
  if (is_maze()) {
    const env::MazeState s = maze().step({p.pos(), {p.vx, p.vy}}, action);
    return {s.pos.x, s.pos.y, s.vel.x, s.vel.y};
  }
  const env::Vec2 q = wall().step(p.pos(), action);
  return {q.x, q.y, 0.0, 0.0};
}

env::Observation EnvInstance::render(const data::Pose& p) const {
  if (is_maze()) return maze().render({p.pos(), {p.vx, p.vy}});
  return wall().render(p.pos());
}

double EnvInstance::success_threshold() const {
  return is_maze() ? maze().config().success_threshold : wall().config().success_threshold;
}

json EnvInstance::to_json() const {
  return json{{"env", is_maze() ? "maze" : "wall"},
              {"world", is_maze() ? maze().to_json() : wall().to_json()}};
}

EnvInstance EnvInstance::from_json(const json& j) {
  try {
    const std::string kind = j.at("env").get<std::string>();
    if (kind == "wall") return EnvInstance(env::WallWorld::from_json(j.at("world")));
    if (kind == "maze") return EnvInstance(env::MazeWorld::from_json(j.at("world")));
    throw DataError("env must be 'wall' or 'maze', got '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("bad environment JSON: ") + e.what());
  }
}

namespace {

Tensor<float> as_batch(const env::Observation& o) {
  Shape s{1};
  for (std::size_t d : o.image.shape()) s.push_back(d);
  Tensor<float> t(s);
  std::copy(o.image.ptr(), o.image.ptr() + o.image.size(), t.ptr());
  return t;
}

Tensor<float> proprio_batch(const env::Observation& o) {
  Tensor<float> t(Shape{1, o.proprio.size()});
  std::copy(o.proprio.begin(), o.proprio.end(), t.ptr());
  return t;
}

Tensor<float> repeat_rows(const Tensor<float>& row, std::size_t n) {
  const std::size_t d = row.size();
  Tensor<float> out(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) std::copy(row.ptr(), row.ptr() + d, out.ptr() + i * d);
  return out;
}

Tensor<float> encode_obs(const model::WorldModel& m, const env::Observation& o) {
  return m.encode(as_batch(o), m.config().encoder.proprio_dim > 0 ? proprio_batch(o) : Tensor<float>{});
}

}  // namespace

LatentModel latent_model(const model::WorldModel& m) {
  LatentModel lm;
  lm.encode = [&m](const env::Observation& o) { return encode_obs(m, o); };
  lm.predict = [&m](const Tensor<float>& z, const Tensor<float>& a) { return m.predict(z, a); };
  lm.goal_embedding = lm.encode;
  lm.cost = [&m](const Tensor<float>& z, const Tensor<float>& g) {
    return m.distance(z, repeat_rows(g, z.dim(0)));
  };
  return lm;
}

LatentModel dual_latent_model(const model::WorldModel& level1, const model::WorldModel& level2) {
  LatentModel lm;
  lm.encode = [&level1](const env::Observation& o) { return encode_obs(level1, o); };
  lm.predict = [&level1](const Tensor<float>& z, const Tensor<float>& a) {
    return level1.predict(z, a);
  };
  lm.goal_embedding = [&level1, &level2](const env::Observation& o) {
    return level2.encode(encode_obs(level1, o));
  };
  lm.cost = [&level2](const Tensor<float>& z, const Tensor<float>& g) {
    return level2.distance(level2.encode(z), repeat_rows(g, z.dim(0)));
  };
  return lm;
}

LatentModel LoadedModel::latent() const {
  return level2 ? dual_latent_model(level1, *level2) : latent_model(level1);
}

LoadedModel LoadedModel::load(const std::filesystem::path& ckpt) {
  json extra;
  model::WorldModel m = model::WorldModel::load(ckpt, &extra);
  std::optional<model::WorldModel> l2;
  if (extra.contains("dual_level2"))
    l2 = model::WorldModel::load(ckpt.parent_path() / extra.at("dual_level2").get<std::string>());
  return LoadedModel{std::move(m), std::move(l2), std::move(extra)};
}

std::vector<double> rollout_costs(const LatentModel& m, const Tensor<float>& z0,
                                  const Tensor<float>& sequences, const Tensor<float>& goal) {
  if (sequences.shape().size() != 3 || sequences.dim(2) != 2)
    throw DataError("action sequences must be [K, H, 2], got " + ad::shape_str(sequences.shape()));
  const std::size_t k = sequences.dim(0), h = sequences.dim(1);
  if (z0.shape().size() != 2 || z0.dim(0) != 1)
    throw DataError("rollout start latent must be [1, D], got " + ad::shape_str(z0.shape()));
  Tensor<float> z = repeat_rows(z0, k);
  std::vector<double> cost(k, 0.0);
  Tensor<float> a(Shape{k, 2});
  for (std::size_t t = 0; t < h; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      a[2 * i] = sequences[(i * h + t) * 2];
      a[2 * i + 1] = sequences[(i * h + t) * 2 + 1];
    }
    z = m.predict(z, a);
    const Tensor<float> d = m.cost(z, goal);
    for (std::size_t i = 0; i < k; ++i) cost[i] += d[i];
  }
  return cost;
}

double rollout_cost(const LatentModel& m, const Tensor<float>& z0, const Tensor<float>& actions,
                    const Tensor<float>& goal) {
  if (actions.shape().size() != 2 || actions.dim(1) != 2)
    throw DataError("actions must be [H, 2], got " + ad::shape_str(actions.shape()));
  Tensor<float> seq(Shape{1, actions.dim(0), 2}, std::vector<float>(actions.data().begin(), actions.data().end()));
  return rollout_costs(m, z0, seq, goal)[0];
}

std::vector<double> mppi_weights(const std::vector<double>& costs, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("temperature lambda must be positive");
  double lo = std::numeric_limits<double>::infinity();
  for (double c : costs)
    if (std::isfinite(c)) lo = std::min(lo, c);
  if (!std::isfinite(lo)) throw NumericError("MPPI: every sampled cost is non-finite");
  std::vector<double> w(costs.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i])) continue;
    w[i] = std::exp(-(costs[i] - lo) / lambda);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

MppiStep mppi_step(const SequenceCost& cost, const Tensor<float>& mean, const PlanConfig& cfg,
                   Rng& rng) {
  if (cfg.num_samples == 0) throw ConfigError("num_samples must be at least 1");
  if (mean.shape().size() != 2 || mean.dim(1) != 2)
    throw DataError("mean sequence must be [H, 2], got " + ad::shape_str(mean.shape()));
  const std::size_t k = cfg.num_samples, h = mean.dim(0);
  Tensor<float> seq(Shape{k, h, 2});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t t = 0; t < h; ++t) {
      env::Vec2 a{mean[2 * t] + cfg.sigma * standard_normal(rng),
                  mean[2 * t + 1] + cfg.sigma * standard_normal(rng)};
      a = env::clip_norm(a, cfg.action_bound);
      seq[(i * h + t) * 2] = static_cast<float>(a.x);
      seq[(i * h + t) * 2 + 1] = static_cast<float>(a.y);
    }
  MppiStep out;
  out.costs = cost(seq);
  if (out.costs.size() != k) throw DataError("MPPI cost function returned wrong count");
  out.weights = mppi_weights(out.costs, cfg.lambda);
  out.best_index = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (std::isfinite(out.costs[i]) &&
        (!std::isfinite(out.costs[out.best_index]) || out.costs[i] < out.costs[out.best_index]))
      out.best_index = i;
  out.best_cost = out.costs[out.best_index];
  std::vector<double> acc(h * 2, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (out.weights[i] == 0.0) continue;
    for (std::size_t j = 0; j < h * 2; ++j) acc[j] += out.weights[i] * seq[i * h * 2 + j];
  }
  out.mean = Tensor<float>(Shape{h, 2});
  for (std::size_t j = 0; j < h * 2; ++j) out.mean[j] = static_cast<float>(acc[j]);
  return out;
}

double PlanResult::min_goal_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : trace) best = std::min(best, env::distance(p.pos(), goal.pos()));
  return best;
}

namespace {

json pose_json(const data::Pose& p) { return json::array({p.x, p.y, p.vx, p.vy}); }
data::Pose pose_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

}  // namespace

json PlanResult::to_json() const {
  json acts = json::array(), tr = json::array();
  for (const auto& a : actions) acts.push_back({a.x, a.y});
  for (const auto& p : trace) tr.push_back(pose_json(p));
  return json{{"start", pose_json(start)},
              {"goal", pose_json(goal)},
              {"threshold", threshold},
              {"success", success},
              {"steps_to_goal", steps_to_goal ? json(*steps_to_goal) : json(nullptr)},
              {"min_goal_distance", min_goal_distance()},
              {"actions", acts},
              {"trace", tr},
              {"replan_costs", replan_costs}};
}

PlanResult PlanResult::from_json(const json& j) {
  PlanResult r;
  try {
    r.start = pose_from(j.at("start"));
    r.goal = pose_from(j.at("goal"));
    r.threshold = j.at("threshold").get<double>();
    r.success = j.at("success").get<bool>();
    if (!j.at("steps_to_goal").is_null()) r.steps_to_goal = j.at("steps_to_goal").get<std::size_t>();
    for (const auto& a : j.at("actions")) r.actions.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
    for (const auto& p : j.at("trace")) r.trace.push_back(pose_from(p));
    r.replan_costs = j.at("replan_costs").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad plan result: ") + e.what());
  }
  return r;
}

PlanResult mpc_plan(const EnvInstance& env, const LatentModel& m, const data::Pose& start,
                    const data::Pose& goal, const PlanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!env.legal(start.pos())) throw DataError("start pose is not legal");
  if (!env.legal(goal.pos())) throw DataError("goal pose is not legal");
  PlanResult r;
  r.start = start;
  r.goal = goal;
  r.threshold = env.success_threshold();
  r.trace.push_back(start);
  auto reached = [&](const data::Pose& p) { return env::distance(p.pos(), goal.pos()) <= r.threshold; };
  if (reached(start)) {
    r.success = true;
    r.steps_to_goal = 0;
    return r;
  }
  const Tensor<float> g = m.goal_embedding(env.render(goal));
  Rng rng = make_rng(seed);
  Tensor<float> mean(Shape{cfg.horizon, 2});
  data::Pose pose = start;
  std::size_t step = 0;
  bool first = true;
  while (step < cfg.total_steps) {
    const std::size_t remaining = cfg.total_steps - step;
    const std::size_t h = cfg.cap_horizon ? std::min(cfg.horizon, remaining) : cfg.horizon;
    if (mean.dim(0) != h) {
      Tensor<float> cut(Shape{h, 2});
      std::copy(mean.ptr(), mean.ptr() + 2 * std::min(h, mean.dim(0)), cut.ptr());
      mean = std::move(cut);
    }
    const Tensor<float> z0 = m.encode(env.render(pose));
    const SequenceCost cost = [&](const Tensor<float>& seq) { return rollout_costs(m, z0, seq, g); };
    const std::size_t iters = first ? cfg.burn_in_iterations : cfg.iterations_per_replan;
    first = false;
    double best = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      MppiStep s = mppi_step(cost, mean, cfg, rng);
      mean = std::move(s.mean);
      best = s.best_cost;
    }
    r.replan_costs.push_back(best);
    const std::size_t exec = std::min({cfg.replan_interval, h, remaining});
    for (std::size_t i = 0; i < exec; ++i) {
      const env::Vec2 a = env::clip_norm({mean[2 * i], mean[2 * i + 1]}, cfg.action_bound);
      pose = env.step(pose, a);
      r.actions.push_back(a);
      r.trace.push_back(pose);
      ++step;
      if (reached(pose)) {
        r.success = true;
        r.steps_to_goal = step;
        return r;
      }
    }
    // Warm start: drop the executed prefix, pad with zeros.
    Tensor<float> shifted(Shape{h, 2});
    for (std::size_t t = exec; t < h; ++t) {
      shifted[2 * (t - exec)] = mean[2 * t];
      shifted[2 * (t - exec) + 1] = mean[2 * t + 1];
    }
    mean = std::move(shifted);
  }
  return r;
}

}  // namespace vgjepa::plan
