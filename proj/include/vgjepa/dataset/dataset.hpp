// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vgjepa/env/maze.hpp"
#include "vgjepa/env/wall.hpp"

namespace vgjepa::data {

enum class Regime { kWS, kWB, kMaze };

std::string to_string(Regime r);
Regime parse_regime(const std::string& s);

// Action-norm distribution for the wall regimes: Gaussian clipped to
// [lo, hi].
struct NormDistribution {
  double mean;
  double sd;
  double lo;
  double hi;
};
NormDistribution wall_norms(Regime r);

struct DatasetConfig {
  Regime regime = Regime::kWS;
  std::size_t num_trajectories = 1000;
  // Observations per trajectory; each trajectory holds length - 1 actions.
  std::size_t length = 64;
  double von_mises_kappa = 5.0;
  double crossing_fraction = 0.5;
  std::size_t max_attempts_per_trajectory = 5000;
  double maze_max_action = 5.0;
  env::WallConfig wall;
  env::MazeConfig maze;

  bool is_maze() const { return regime == Regime::kMaze; }
  // Paper-scale defaults for a regime.
  static DatasetConfig defaults(Regime r);
};
void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

// Pose stored per observation: position plus velocity (zero in the wall).
struct Pose {
  double x, y, vx, vy;
  env::Vec2 pos() const { return {x, y}; }
};

struct TrajectoryInfo {
  nlohmann::json world;
  bool crossed_door = false;
  double base_direction = 0.0;  // wall only
  int layout_id = -1;           // maze only
  std::vector<env::Vec2> actions;
  std::vector<Pose> poses;
};

// Observation geometry shared by every frame of a dataset.
struct FrameShape {
  std::size_t channels = 0;
  std::size_t resolution = 0;
  std::size_t proprio = 0;
  std::size_t image_floats() const { return channels * resolution * resolution; }
};

// Trajectory dataset. Per-trajectory metadata lives in memory; rendered
// frames live in a contiguous float store that is either owned or mapped
// from disk.
class TrajectoryDataset {
 public:
  struct FramePointers {
    const float* images;
    const float* proprio;
  };

  // `storage` keeps the memory behind `frames` alive.
  TrajectoryDataset(nlohmann::json manifest, FrameShape shape,
                    std::vector<TrajectoryInfo> infos,
                    std::vector<FramePointers> frames,
                    std::shared_ptr<const void> storage);

  const nlohmann::json& manifest() const noexcept { return manifest_; }
  const FrameShape& frame_shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return infos_.size(); }
  // Observations per trajectory.
  std::size_t length() const noexcept { return length_; }
  const TrajectoryInfo& info(std::size_t i) const { return infos_.at(i); }
  Regime regime() const;

  std::span<const float> image(std::size_t traj, std::size_t t) const;
  std::span<const float> proprio(std::size_t traj, std::size_t t) const;
  env::Observation observation(std::size_t traj, std::size_t t) const;

 private:
  nlohmann::json manifest_;
  FrameShape shape_;
  std::vector<TrajectoryInfo> infos_;
  std::size_t length_;
  std::vector<FramePointers> frames_;
  std::shared_ptr<const void> storage_;
};

// Samples a von Mises(0, kappa) angle (Best-Fisher rejection sampler).
double sample_von_mises(double kappa, Rng& rng);

// One generated trajectory with its rendered frames.
struct GeneratedTrajectory {
  TrajectoryInfo info;
  std::vector<float> frames;   // length * image_floats
  std::vector<float> proprio;  // length * proprio
};

GeneratedTrajectory generate_wall_trajectory(const DatasetConfig& cfg,
                                             std::uint64_t seed,
                                             std::size_t index,
                                             bool want_crossing);
GeneratedTrajectory generate_maze_trajectory(const DatasetConfig& cfg,
                                             std::uint64_t seed,
                                             std::size_t index);

using TrajectorySink = std::function<void(std::size_t, GeneratedTrajectory&&)>;

// Generates every trajectory in index order and hands each to `sink`.
// Returns the dataset manifest. Output is independent of `threads`.
nlohmann::json generate(const DatasetConfig& cfg, std::uint64_t seed,
                        const TrajectorySink& sink, unsigned threads = 1);

// In-memory generation.
TrajectoryDataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                                   unsigned threads = 1);
TrajectoryDataset generate_wall_dataset(Regime regime, std::uint64_t seed);
TrajectoryDataset generate_maze_dataset(std::uint64_t seed);

// On-disk layout (directory):
//   manifest.json
//   trajectories.bin: "VGJTRAJ1" | u64 count | count x (u64 offset, u64 bytes)
//                     | blocks
//   block: f32 images[L*C*H*W] | f32 proprio[L*P] | f32 actions[(L-1)*2]
//          | f32 poses[L*4]
// Offsets are absolute file positions.
void write_dataset(const TrajectoryDataset& ds, const std::filesystem::path& dir);
// Streams generation straight to disk without holding frames in memory.
nlohmann::json generate_to_disk(const DatasetConfig& cfg, std::uint64_t seed,
                                const std::filesystem::path& dir,
                                unsigned threads = 1);
// Maps frames from disk.
TrajectoryDataset read_dataset(const std::filesystem::path& dir);

}  // namespace vgjepa::data
