// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>

#include "vgjepa/common/rng.hpp"
#include "vgjepa/env/geometry.hpp"
#include "vgjepa/env/observation.hpp"

namespace vgjepa::env {

struct WallConfig {
  double side = 64.0;
  double wall_thickness = 1.0;
  double door_half_width_min = 4.0;
  double door_half_width_max = 8.0;
  double agent_radius = 1.5;
  // Wall centre is drawn uniformly in [lo, hi] * side.
  double wall_x_lo = 0.4;
  double wall_x_hi = 0.6;
  // Minimum gap between the door opening and the arena edge.
  double door_margin = 6.0;
  std::size_t image_size = 64;
  double success_threshold = 2.5;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WallConfig, side, wall_thickness,
                                                door_half_width_min,
                                                door_half_width_max, agent_radius,
                                                wall_x_lo, wall_x_hi, door_margin,
                                                image_size, success_threshold)

// Square arena split by a vertical wall with a single door. Geometry is
// fixed at construction.
class WallWorld {
 public:
  static constexpr std::size_t kChannels = 2;  // agent, walls

  WallWorld(const WallConfig& cfg, double wall_x, double door_center_y,
            double door_half_width, std::uint64_t seed = 0);

  const WallConfig& config() const noexcept { return cfg_; }
  double wall_x() const noexcept { return wall_x_; }
  double door_center_y() const noexcept { return door_y_; }
  double door_half_width() const noexcept { return door_hw_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // The two wall segments above and below the door.
  std::array<Rect, 2> wall_rects() const;

  // In bounds and not overlapping the wall.
  bool legal(Vec2 pos) const;
  // -1 left of the wall centre line, +1 right.
  int side_of(Vec2 pos) const { return pos.x < wall_x_ ? -1 : 1; }

  // Moves along the straight segment pos -> pos + action, stopping at the
  // first contact with the wall or the arena boundary.
  Vec2 step(Vec2 pos, Vec2 action) const;

  Observation render(Vec2 pos) const;

  nlohmann::json to_json() const;
  static WallWorld from_json(const nlohmann::json& j);

 private:
  WallConfig cfg_;
  double wall_x_;
  double door_y_;
  double door_hw_;
  std::uint64_t seed_;
  ad::Tensor<float> wall_plane_;
};

WallWorld sample_wall_world(const WallConfig& cfg, std::uint64_t seed);

// Uniform legal position, optionally restricted to one side of the wall.
Vec2 sample_wall_position(const WallWorld& world, Rng& rng, int side = 0);

}  // namespace vgjepa::env
