// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "vgjepa/plan/plan.hpp"
#include "vgjepa/train/train.hpp"

namespace vgjepa::eval {

struct BenchmarkSpec {
  data::Regime regime = data::Regime::kWS;
  // 0 picks the regime default (200 wall, 80 maze).
  std::size_t instances = 0;
  std::uint64_t seed = 0;
  plan::PlanConfig plan;
  env::WallConfig wall;
  env::MazeConfig maze;
  // Minimum 4-connected cell distance between maze start and goal.
  int maze_min_cells = 3;
  // Label of the model under test (checkpoint path or mode name).
  std::string model;

  std::size_t instance_count() const;
  void validate() const;
  static BenchmarkSpec defaults(data::Regime r);
};
void to_json(nlohmann::json& j, const BenchmarkSpec& s);
void from_json(const nlohmann::json& j, BenchmarkSpec& s);

struct BenchmarkInstance {
  std::size_t index = 0;
  plan::EnvInstance env;
  data::Pose start;
  data::Pose goal;
  std::uint64_t plan_seed = 0;
};

// Depends only on the environment fields, the count and the seed, so every
// model evaluated with the same spec sees the same instances.
std::vector<BenchmarkInstance> make_instances(const BenchmarkSpec& spec);

struct BenchmarkResult {
  BenchmarkSpec spec;
  std::vector<plan::PlanResult> results;
  double success_rate = 0.0;

  std::size_t successes() const;
};

double success_rate(const std::vector<plan::PlanResult>& results);

// Plans every instance with `threads` workers. The result does not depend on
// the thread count.
BenchmarkResult run_benchmark(const BenchmarkSpec& spec, const plan::LatentModel& m,
                              unsigned threads = 1);

// dir/benchmark.json (spec, counts, rate) and dir/instances.jsonl (one
// PlanResult per line, instance order).
void write_benchmark(const BenchmarkResult& r, const std::filesystem::path& dir);
BenchmarkResult read_benchmark(const std::filesystem::path& dir);

enum class SweepParam { kGamma, kTau };
std::string to_string(SweepParam p);
SweepParam parse_sweep_param(const std::string& s);

struct SweepRow {
  double value = 0.0;
  double success_rate = 0.0;
  std::string config_hash;
};

struct SweepTable {
  SweepParam param = SweepParam::kGamma;
  std::vector<double> values;
  std::string mode;
  std::vector<SweepRow> rows;

  // Header comment lines carry the grid verbatim, then "value,success_rate,config_hash".
  std::string csv() const;
  std::string svg() const;
};

// One training run and one benchmark per value, with the swept loss
// parameter overriding `base`. Runs land in out_dir/<param>_<value>/ when
// out_dir is set; sweep.csv and sweep.svg are written next to them.
SweepTable sweep(SweepParam param, const std::vector<double>& values,
                 const train::TrainConfig& base, const data::TrajectoryDataset& ds,
                 const BenchmarkSpec& bench, const std::filesystem::path& out_dir = {},
                 unsigned threads = 1);

}  // namespace vgjepa::eval
