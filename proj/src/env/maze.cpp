// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/env/maze.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace vgjepa::env {
namespace {

constexpr float kFloor[3] = {0.9f, 0.9f, 0.9f};
constexpr float kWall[3] = {0.15f, 0.2f, 0.55f};
constexpr float kAgent[3] = {0.1f, 0.85f, 0.2f};

}  // namespace

std::size_t MazeLayout::open_count() const {
  return static_cast<std::size_t>(std::count(open.begin(), open.end(), 1));
}

double MazeLayout::open_fraction() const {
  return static_cast<double>(open_count()) / static_cast<double>(open.size());
}

bool MazeLayout::connected() const {
  const auto first = std::find(open.begin(), open.end(), 1);
  if (first == open.end()) return false;
  std::vector<std::uint8_t> seen(open.size(), 0);
  std::deque<std::size_t> q{static_cast<std::size_t>(first - open.begin())};
  seen[q.front()] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const std::size_t c = q.front();
    q.pop_front();
    const long r = static_cast<long>(c / grid), k = static_cast<long>(c % grid);
    const long nb[4][2] = {{r - 1, k}, {r + 1, k}, {r, k - 1}, {r, k + 1}};
    for (const auto& n : nb) {
      if (!is_open(n[0], n[1])) continue;
      const std::size_t id = static_cast<std::size_t>(n[0]) * grid + static_cast<std::size_t>(n[1]);
      if (seen[id]) continue;
      seen[id] = 1;
      ++reached;
      q.push_back(id);
    }
  }
  return reached == open_count();
}

MazeLayout generate_maze_layout(const MazeConfig& cfg, Rng& rng) {
  const std::size_t cells = cfg.grid * cfg.grid;
  const auto lo = static_cast<std::size_t>(std::ceil(cfg.min_open_fraction * cells - 1e-9));
  const auto hi = static_cast<std::size_t>(std::floor(cfg.max_open_fraction * cells + 1e-9));
  if (lo > hi || lo == 0) throw ConfigError("empty maze open-fraction range");
  const std::size_t target = lo + uniform_index(rng, hi - lo + 1);
  MazeLayout layout{cfg.grid, std::vector<std::uint8_t>(cells, 0)};
  layout.open[uniform_index(rng, cells)] = 1;
  // Grow one contiguous region by adding random frontier cells.
  while (layout.open_count() < target) {
    std::vector<std::size_t> frontier;
    for (std::size_t c = 0; c < cells; ++c) {
      if (layout.open[c]) continue;
      const long r = static_cast<long>(c / cfg.grid), k = static_cast<long>(c % cfg.grid);
      if (layout.is_open(r - 1, k) || layout.is_open(r + 1, k) ||
          layout.is_open(r, k - 1) || layout.is_open(r, k + 1))
        frontier.push_back(c);
    }
    layout.open[frontier[uniform_index(rng, frontier.size())]] = 1;
  }
  return layout;
}

std::vector<MazeLayout> training_layouts(const MazeConfig& cfg) {
  std::vector<MazeLayout> pool;
  for (std::uint64_t i = 0; pool.size() < cfg.train_layouts; ++i) {
    if (i > 10000) throw DataError("could not draw distinct training layouts");
    Rng rng = make_rng(derive_seed(cfg.layout_pool_seed, i));
    MazeLayout l = generate_maze_layout(cfg, rng);
    if (std::find(pool.begin(), pool.end(), l) == pool.end()) pool.push_back(std::move(l));
  }
  return pool;
}

MazeWorld sample_maze_world(const MazeConfig& cfg, std::uint64_t seed,
                            MazeSplit split) {
  const std::vector<MazeLayout> pool = training_layouts(cfg);
  Rng rng = make_rng(seed);
  if (split == MazeSplit::kTrain) {
    const std::size_t id = uniform_index(rng, pool.size());
    return MazeWorld(cfg, pool[id], seed, static_cast<int>(id));
  }
  constexpr int kMaxTries = 1000;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    MazeLayout l = generate_maze_layout(cfg, rng);
    if (std::find(pool.begin(), pool.end(), l) == pool.end()) {
      return MazeWorld(cfg, std::move(l), seed, -1);
    }
  }
  throw DataError("eval maze layout sampling exhausted its retry budget");
}

MazeWorld::MazeWorld(const MazeConfig& cfg, MazeLayout layout,
                     std::uint64_t seed, int layout_id)
    : cfg_(cfg), layout_(std::move(layout)), seed_(seed), layout_id_(layout_id) {
  if (layout_.grid != cfg.grid || layout_.open.size() != cfg.grid * cfg.grid) {
    throw ConfigError("maze layout does not match the configured grid");
  }
  const std::size_t res = cfg.image_size;
  const double scale = static_cast<double>(res) / cfg.side();
  ad::Tensor<float> blocked({res, res});
  for (std::size_t r = 0; r < cfg.grid; ++r)
    for (std::size_t c = 0; c < cfg.grid; ++c)
      if (!layout_.is_open(static_cast<long>(r), static_cast<long>(c)))
        rasterize_rect(blocked.ptr(), res, scale, c * cfg.cell_size,
                       r * cfg.cell_size, (c + 1) * cfg.cell_size,
                       (r + 1) * cfg.cell_size);
  background_ = ad::Tensor<float>({kChannels, res, res});
  for (std::size_t ch = 0; ch < kChannels; ++ch)
    for (std::size_t i = 0; i < res * res; ++i)
      background_[ch * res * res + i] =
          kFloor[ch] * (1.0f - blocked[i]) + kWall[ch] * blocked[i];
}

std::pair<long, long> MazeWorld::cell_of(Vec2 p) const {
  return {static_cast<long>(std::floor(p.y / cfg_.cell_size)),
          static_cast<long>(std::floor(p.x / cfg_.cell_size))};
}

// Agent collision footprint: axis-aligned square of half-size radius.
// Cells touched only on their boundary do not count.
bool MazeWorld::box_blocked(Vec2 p) const {
  const double r = cfg_.agent_radius, cs = cfg_.cell_size;
  const long c0 = static_cast<long>(std::floor((p.x - r) / cs));
  const long c1 = static_cast<long>(std::ceil((p.x + r) / cs)) - 1;
  const long r0 = static_cast<long>(std::floor((p.y - r) / cs));
  const long r1 = static_cast<long>(std::ceil((p.y + r) / cs)) - 1;
  for (long row = r0; row <= r1; ++row)
    for (long col = c0; col <= c1; ++col)
      if (!layout_.is_open(row, col)) return true;
  return false;
}

bool MazeWorld::legal(Vec2 p) const { return !box_blocked(p); }

MazeState MazeWorld::step(MazeState s, Vec2 target) const {
  const double r = cfg_.agent_radius, cs = cfg_.cell_size;
  const double dt = 1.0 / cfg_.substeps;
  target = clip_norm(target, cfg_.max_speed);
  for (int k = 0; k < cfg_.substeps; ++k) {
    s.vel = s.vel + cfg_.gain * (target - s.vel);
    s.vel = clip_norm(s.vel, cfg_.max_speed);
    // Axis-separated integration; a blocked move snaps to the face of the
    // blocking cell and zeroes that velocity component.
    Vec2 trial{s.pos.x + dt * s.vel.x, s.pos.y};
    if (box_blocked(trial)) {
      if (s.vel.x > 0) {
        trial.x = std::ceil((s.pos.x + r) / cs) * cs - r;
        if (trial.x < s.pos.x) trial.x = s.pos.x;
      } else {
        trial.x = std::floor((s.pos.x - r) / cs) * cs + r;
        if (trial.x > s.pos.x) trial.x = s.pos.x;
      }
      if (box_blocked(trial)) trial.x = s.pos.x;
      s.vel.x = 0.0;
    }
    s.pos.x = trial.x;
    trial = Vec2{s.pos.x, s.pos.y + dt * s.vel.y};
    if (box_blocked(trial)) {
      if (s.vel.y > 0) {
        trial.y = std::ceil((s.pos.y + r) / cs) * cs - r;
        if (trial.y < s.pos.y) trial.y = s.pos.y;
      } else {
        trial.y = std::floor((s.pos.y - r) / cs) * cs + r;
        if (trial.y > s.pos.y) trial.y = s.pos.y;
      }
      if (box_blocked(trial)) trial.y = s.pos.y;
      s.vel.y = 0.0;
    }
    s.pos.y = trial.y;
  }
  return s;
}

Observation MazeWorld::render(const MazeState& s) const {
  const std::size_t res = cfg_.image_size;
  const double scale = static_cast<double>(res) / cfg_.side();
  ad::Tensor<float> img = background_;
  std::vector<float> cover(res * res, 0.0f);
  rasterize_disc(cover.data(), res, scale, s.pos.x, s.pos.y, cfg_.agent_radius);
  for (std::size_t ch = 0; ch < kChannels; ++ch)
    for (std::size_t i = 0; i < res * res; ++i) {
      float& px = img[ch * res * res + i];
      px = px * (1.0f - cover[i]) + kAgent[ch] * cover[i];
    }
  return Observation{std::move(img),
                     {static_cast<float>(s.vel.x), static_cast<float>(s.vel.y)}};
}

int MazeWorld::cell_distance(Vec2 a, Vec2 b) const {
  const auto [ar, ac] = cell_of(a);
  const auto [br, bc] = cell_of(b);
  if (!layout_.is_open(ar, ac) || !layout_.is_open(br, bc)) return -1;
  const long g = static_cast<long>(cfg_.grid);
  std::vector<int> dist(cfg_.grid * cfg_.grid, -1);
  std::deque<long> q{ar * g + ac};
  dist[ar * g + ac] = 0;
  while (!q.empty()) {
    const long c = q.front();
    q.pop_front();
    const long r = c / g, k = c % g;
    const long nb[4][2] = {{r - 1, k}, {r + 1, k}, {r, k - 1}, {r, k + 1}};
    for (const auto& n : nb) {
      if (!layout_.is_open(n[0], n[1]) || dist[n[0] * g + n[1]] >= 0) continue;
      dist[n[0] * g + n[1]] = dist[c] + 1;
      q.push_back(n[0] * g + n[1]);
    }
  }
  return dist[br * g + bc];
}

nlohmann::json MazeWorld::to_json() const {
  return {{"kind", "maze"},
          {"config", cfg_},
          {"open", layout_.open},
          {"layout_id", layout_id_},
          {"seed", seed_}};
}

MazeWorld MazeWorld::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "maze") throw DataError("not a maze world description");
  const MazeConfig cfg = j.at("config").get<MazeConfig>();
  MazeLayout layout{cfg.grid, j.at("open").get<std::vector<std::uint8_t>>()};
  return MazeWorld(cfg, std::move(layout), j.value("seed", std::uint64_t{0}),
                   j.value("layout_id", -1));
}

MazeState sample_maze_state(const MazeWorld& world, Rng& rng) {
  const double side = world.config().side();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec2 p{uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
    if (world.legal(p)) return MazeState{p, {0.0, 0.0}};
  }
  throw DataError("could not sample a legal maze position");
}

}  // namespace vgjepa::env
