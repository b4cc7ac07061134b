// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <variant>
#include <vector>

#include "vgjepa/dataset/dataset.hpp"
#include "vgjepa/model/model.hpp"

namespace vgjepa::plan {

using ad::Tensor;

struct PlanConfig {
  std::size_t horizon = 96;
  std::size_t total_steps = 200;
  std::size_t num_samples = 2000;
  double sigma = 12.0;
  double lambda = 0.005;
  // Sampled actions are rescaled to at most this norm.
  double action_bound = 1.8;
  std::size_t replan_interval = 1;
  std::size_t burn_in_iterations = 10;
  std::size_t iterations_per_replan = 1;
  // Shrink the horizon to the remaining step budget.
  bool cap_horizon = true;

  void validate() const;
  static PlanConfig defaults(data::Regime r);
};
void to_json(nlohmann::json& j, const PlanConfig& c);
void from_json(const nlohmann::json& j, PlanConfig& c);

// A wall or maze world seen through poses (position plus velocity).
class EnvInstance {
 public:
  explicit EnvInstance(env::WallWorld w) : world_(std::move(w)) {}
  explicit EnvInstance(env::MazeWorld w) : world_(std::move(w)) {}

  bool is_maze() const { return std::holds_alternative<env::MazeWorld>(world_); }
  const env::WallWorld& wall() const { return std::get<env::WallWorld>(world_); }
  const env::MazeWorld& maze() const { return std::get<env::MazeWorld>(world_); }
  bool legal(env::Vec2 p) const;
  data::Pose step(const data::Pose& p, env::Vec2 action) const;
  env::Observation render(const data::Pose& p) const;
  double success_threshold() const;

  // {"env": "wall"|"maze", "world": {...}}
  nlohmann::json to_json() const;
  static EnvInstance from_json(const nlohmann::json& j);

 private:
  std::variant<env::WallWorld, env::MazeWorld> world_;
};

// What the planner needs from a world model. encode gives the dynamics
// latent [1, D]; goal_embedding maps a goal observation into cost space;
// cost gives d(z_i -> goal) for each row of z.
struct LatentModel {
  std::function<Tensor<float>(const env::Observation&)> encode;
  std::function<Tensor<float>(const Tensor<float>& z, const Tensor<float>& a)> predict;
  std::function<Tensor<float>(const env::Observation&)> goal_embedding;
  std::function<Tensor<float>(const Tensor<float>& z, const Tensor<float>& goal)> cost;
};
LatentModel latent_model(const model::WorldModel& m);
// Predictions from level 1, costs in the level-2 space of E2(z).
LatentModel dual_latent_model(const model::WorldModel& level1, const model::WorldModel& level2);

// Holds a loaded checkpoint (and its dual second level, if any).
struct LoadedModel {
  model::WorldModel level1;
  std::optional<model::WorldModel> level2;
  nlohmann::json extra;
  LatentModel latent() const;
  static LoadedModel load(const std::filesystem::path& ckpt);
};

// Sum over t of d(z_t -> goal) along the open-loop rollout of `actions`
// [H, 2] from z0 [1, D]; uniform weights.
double rollout_cost(const LatentModel& m, const Tensor<float>& z0, const Tensor<float>& actions,
                    const Tensor<float>& goal);
// Batched: sequences [K, H, 2] -> K costs.
std::vector<double> rollout_costs(const LatentModel& m, const Tensor<float>& z0,
                                  const Tensor<float>& sequences, const Tensor<float>& goal);

// exp(-(c_i - min c) / lambda), normalized. Non-finite costs get weight 0;
// throws NumericError when no cost is finite.
std::vector<double> mppi_weights(const std::vector<double>& costs, double lambda);

using SequenceCost = std::function<std::vector<double>(const Tensor<float>& sequences)>;

struct MppiStep {
  Tensor<float> mean;  // [H, 2]
  std::vector<double> costs;
  std::vector<double> weights;
  double best_cost = 0.0;
  std::size_t best_index = 0;
};
// Samples K sequences mean + N(0, sigma^2), clips each action to the bound,
// and returns their softmax-weighted average.
MppiStep mppi_step(const SequenceCost& cost, const Tensor<float>& mean, const PlanConfig& cfg,
                   Rng& rng);

struct PlanResult {
  data::Pose start;
  data::Pose goal;
  double threshold = 0.0;
  std::vector<env::Vec2> actions;
  std::vector<data::Pose> trace;  // start first, then one pose per action
  std::vector<double> replan_costs;
  bool success = false;
  std::optional<std::size_t> steps_to_goal;

  double min_goal_distance() const;
  nlohmann::json to_json() const;
  static PlanResult from_json(const nlohmann::json& j);
};

// Receding-horizon loop: encode, optimize, execute, shift, repeat until the
// goal is within the threshold or the step budget runs out.
PlanResult mpc_plan(const EnvInstance& env, const LatentModel& m, const data::Pose& start,
                    const data::Pose& goal, const PlanConfig& cfg, std::uint64_t seed);

}  // namespace vgjepa::plan
