// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <json.hpp>
#include <vector>

#include "vgjepa/common/rng.hpp"
#include "vgjepa/env/geometry.hpp"
#include "vgjepa/env/observation.hpp"

namespace vgjepa::env {

struct MazeConfig {
  std::size_t grid = 4;
  double cell_size = 16.0;
  double agent_radius = 2.0;
  double max_speed = 5.0;
  // First-order velocity relaxation v += gain * (target - v), applied
  // `substeps` times per action; position advances v / substeps each time.
  double gain = 0.5;
  int substeps = 4;
  double min_open_fraction = 0.5;
  double max_open_fraction = 0.6;
  std::size_t image_size = 64;
  std::uint64_t layout_pool_seed = 20240917;
  std::size_t train_layouts = 5;
  double success_threshold = 8.0;  // half a cell

  double side() const { return cell_size * static_cast<double>(grid); }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MazeConfig, grid, cell_size,
                                                agent_radius, max_speed, gain,
                                                substeps, min_open_fraction,
                                                max_open_fraction, image_size,
                                                layout_pool_seed, train_layouts,
                                                success_threshold)

// Row-major grid of open (true) and blocked cells.
struct MazeLayout {
  std::size_t grid = 4;
  std::vector<std::uint8_t> open;

  bool is_open(long row, long col) const {
    if (row < 0 || col < 0 || row >= static_cast<long>(grid) ||
        col >= static_cast<long>(grid))
      return false;
    return open[static_cast<std::size_t>(row) * grid + static_cast<std::size_t>(col)] != 0;
  }
  std::size_t open_count() const;
  double open_fraction() const;
  bool connected() const;  // flood fill over 4-neighbours
  friend bool operator==(const MazeLayout&, const MazeLayout&) = default;
};

struct MazeState {
  Vec2 pos;
  Vec2 vel;
};

enum class MazeSplit { kTrain, kEval };

class MazeWorld {
 public:
  static constexpr std::size_t kChannels = 3;  // RGB

  MazeWorld(const MazeConfig& cfg, MazeLayout layout, std::uint64_t seed = 0,
            int layout_id = -1);

  const MazeConfig& config() const noexcept { return cfg_; }
  const MazeLayout& layout() const noexcept { return layout_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int layout_id() const noexcept { return layout_id_; }

  bool legal(Vec2 pos) const;
  // Grid cell (row, col) containing pos.
  std::pair<long, long> cell_of(Vec2 pos) const;

  // Applies one target-velocity action with inertia and wall collisions.
  MazeState step(MazeState s, Vec2 target) const;

  Observation render(const MazeState& s) const;

  // Shortest 4-connected cell path length between the cells of a and b;
  // -1 if disconnected.
  int cell_distance(Vec2 a, Vec2 b) const;

  nlohmann::json to_json() const;
  static MazeWorld from_json(const nlohmann::json& j);

 private:
  bool box_blocked(Vec2 p) const;

  MazeConfig cfg_;
  MazeLayout layout_;
  std::uint64_t seed_;
  int layout_id_;
  ad::Tensor<float> background_;
};

// Random connected layout with open fraction in the configured range.
MazeLayout generate_maze_layout(const MazeConfig& cfg, Rng& rng);

// The fixed pool of training layouts (size cfg.train_layouts).
std::vector<MazeLayout> training_layouts(const MazeConfig& cfg);

// Train split draws from the training pool; eval split draws fresh layouts
// rejected against it.
MazeWorld sample_maze_world(const MazeConfig& cfg, std::uint64_t seed,
                            MazeSplit split);

// Uniform legal position with zero velocity.
MazeState sample_maze_state(const MazeWorld& world, Rng& rng);

}  // namespace vgjepa::env
