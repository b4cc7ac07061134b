// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/env/wall.hpp"

#include <algorithm>
#include <limits>

namespace vgjepa::env {

WallWorld::WallWorld(const WallConfig& cfg, double wall_x, double door_center_y,
                     double door_half_width, std::uint64_t seed)
    : cfg_(cfg), wall_x_(wall_x), door_y_(door_center_y),
      door_hw_(door_half_width), seed_(seed) {
  const double half_t = cfg.wall_thickness / 2;
  if (!(wall_x - half_t > 0 && wall_x + half_t < cfg.side)) {
    throw ConfigError("wall lies outside the arena");
  }
  if (!(door_center_y - door_half_width > 0 &&
        door_center_y + door_half_width < cfg.side)) {
    throw ConfigError("door opening must lie strictly inside the wall");
  }
  if (door_half_width <= cfg.agent_radius) {
    throw ConfigError("door narrower than the agent");
  }
  const std::size_t res = cfg.image_size;
  wall_plane_ = ad::Tensor<float>({res, res});
  const double scale = static_cast<double>(res) / cfg.side;
  for (const Rect& r : wall_rects()) {
    rasterize_rect(wall_plane_.ptr(), res, scale, r.x0, r.y0, r.x1, r.y1);
  }
}

std::array<Rect, 2> WallWorld::wall_rects() const {
  const double half_t = cfg_.wall_thickness / 2;
  return {Rect{wall_x_ - half_t, 0.0, wall_x_ + half_t, door_y_ - door_hw_},
          Rect{wall_x_ - half_t, door_y_ + door_hw_, wall_x_ + half_t, cfg_.side}};
}

bool WallWorld::legal(Vec2 p) const {
  const double r = cfg_.agent_radius;
  if (p.x < r || p.x > cfg_.side - r || p.y < r || p.y > cfg_.side - r) {
    return false;
  }
  for (const Rect& w : wall_rects()) {
    if (w.expanded(r).contains_strict(p)) return false;
  }
  return true;
}

namespace {

// Earliest contact of p + s*a (s in [0,1]) with the open interior of rect.
// Returns s and the axis/face coordinate that stops the motion.
struct Contact {
  double s = std::numeric_limits<double>::infinity();
  int axis = -1;
  double face = 0.0;
};

Contact segment_entry(Vec2 p, Vec2 a, const Rect& rect) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  int axis = -1;
  double face = 0.0;
  const double pc[2] = {p.x, p.y};
  const double ac[2] = {a.x, a.y};
  const double mins[2] = {rect.x0, rect.y0};
  const double maxs[2] = {rect.x1, rect.y1};
  for (int k = 0; k < 2; ++k) {
    if (ac[k] == 0.0) {
      if (!(pc[k] > mins[k] && pc[k] < maxs[k])) return {};
      continue;
    }
    double t0 = (mins[k] - pc[k]) / ac[k];
    double t1 = (maxs[k] - pc[k]) / ac[k];
    double f = mins[k];
    if (t0 > t1) {
      std::swap(t0, t1);
      f = maxs[k];
    }
    if (t0 > lo) {
      lo = t0;
      axis = k;
      face = f;
    }
    hi = std::min(hi, t1);
  }
  if (!(lo < hi) || hi <= 0.0 || lo >= 1.0) return {};
  return Contact{std::max(lo, 0.0), axis, face};
}

}  // namespace

Vec2 WallWorld::step(Vec2 pos, Vec2 action) const {
  const double r = cfg_.agent_radius;
  Contact best;
  best.s = 1.0;
  // Arena bounds.
  const double pc[2] = {pos.x, pos.y};
  const double ac[2] = {action.x, action.y};
  for (int k = 0; k < 2; ++k) {
    if (ac[k] == 0.0) continue;
    const double limit = ac[k] > 0 ? cfg_.side - r : r;
    const double s = (limit - pc[k]) / ac[k];
    if (s < best.s) best = Contact{std::max(s, 0.0), k, limit};
  }
  for (const Rect& w : wall_rects()) {
    const Contact c = segment_entry(pos, action, w.expanded(r));
    if (c.s < best.s) best = c;
  }
  Vec2 out = pos + best.s * action;
  if (best.axis == 0) out.x = best.face;
  if (best.axis == 1) out.y = best.face;
  return out;
}

Observation WallWorld::render(Vec2 pos) const {
  const std::size_t res = cfg_.image_size;
  ad::Tensor<float> img({kChannels, res, res});
  const double scale = static_cast<double>(res) / cfg_.side;
  rasterize_disc(img.ptr(), res, scale, pos.x, pos.y, cfg_.agent_radius);
  std::copy(wall_plane_.data().begin(), wall_plane_.data().end(),
            img.ptr() + res * res);
  return Observation{std::move(img), {}};
}

nlohmann::json WallWorld::to_json() const {
  return {{"kind", "wall"},
          {"config", cfg_},
          {"wall_x", wall_x_},
          {"door_center_y", door_y_},
          {"door_half_width", door_hw_},
          {"seed", seed_}};
}

WallWorld WallWorld::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "wall") throw DataError("not a wall world description");
  return WallWorld(j.at("config").get<WallConfig>(), j.at("wall_x").get<double>(),
                   j.at("door_center_y").get<double>(),
                   j.at("door_half_width").get<double>(),
                   j.value("seed", std::uint64_t{0}));
}

WallWorld sample_wall_world(const WallConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const double wall_x = uniform(rng, cfg.wall_x_lo, cfg.wall_x_hi) * cfg.side;
  const double hw = uniform(rng, cfg.door_half_width_min, cfg.door_half_width_max);
  const double lo = hw + cfg.door_margin;
  const double hi = cfg.side - hw - cfg.door_margin;
  if (!(lo < hi)) throw ConfigError("door does not fit inside the wall");
  const double door_y = uniform(rng, lo, hi);
  return WallWorld(cfg, wall_x, door_y, hw, seed);
}

Vec2 sample_wall_position(const WallWorld& world, Rng& rng, int side) {
  const WallConfig& c = world.config();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec2 p{uniform(rng, c.agent_radius, c.side - c.agent_radius),
           uniform(rng, c.agent_radius, c.side - c.agent_radius)};
    if (!world.legal(p)) continue;
    if (side != 0 && world.side_of(p) != side) continue;
    return p;
  }
  throw DataError("could not sample a legal wall-world position");
}

}  // namespace vgjepa::env
