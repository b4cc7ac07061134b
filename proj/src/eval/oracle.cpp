// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/eval/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace vgjepa::eval {

OracleValueTable::OracleValueTable(const env::WallWorld& world, double resolution, double gamma)
    : resolution_(resolution), gamma_(gamma) {
  const double side = world.config().side;
  const double cells = side / resolution;
  if (!(resolution > 0.0) || std::abs(cells - std::round(cells)) > 1e-9)
    throw ConfigError("oracle resolution must divide the arena side");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("oracle gamma must lie in (0, 1)");
  n_ = static_cast<long>(std::round(cells));
  free_.assign(static_cast<std::size_t>(n_ * n_), 0);
  for (long r = 0; r < n_; ++r)
    for (long c = 0; c < n_; ++c) {
      const Cell cell{c, r};
      if (world.legal(center(cell))) {
        free_[index(cell)] = 1;
        free_cells_.push_back(cell);
      }
    }
}

bool OracleValueTable::free(Cell c) const {
  if (c.col < 0 || c.row < 0 || c.col >= n_ || c.row >= n_) return false;
  return free_[index(c)] != 0;
}

Cell OracleValueTable::cell_of(env::Vec2 p) const {
  auto clampi = [&](double v) {
    return std::clamp(static_cast<long>(std::floor(v / resolution_)), 0L, n_ - 1);
  };
  return {clampi(p.x), clampi(p.y)};
}

env::Vec2 OracleValueTable::center(Cell c) const {
  return {(static_cast<double>(c.col) + 0.5) * resolution_,
          (static_cast<double>(c.row) + 0.5) * resolution_};
}

std::vector<Cell> OracleValueTable::neighbors(Cell c) const {
  std::vector<Cell> out;
  for (long dr = -1; dr <= 1; ++dr)
    for (long dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const Cell n{c.col + dc, c.row + dr};
      if (free(n)) out.push_back(n);
    }
  return out;
}

const std::vector<int>& OracleValueTable::distances(Cell goal) const {
  if (!free(goal)) throw DataError("oracle goal cell is blocked");
  auto it = cache_.find(index(goal));
  if (it != cache_.end()) return it->second;
  std::vector<int> d(free_.size(), kUnreachable);
  std::deque<Cell> queue{goal};
  d[index(goal)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (Cell n : neighbors(c)) {
      if (d[index(n)] != kUnreachable) continue;
      d[index(n)] = d[index(c)] + 1;
      queue.push_back(n);
    }
  }
  return cache_.emplace(index(goal), std::move(d)).first->second;
}

int OracleValueTable::steps(Cell s, Cell g) const {
  if (!free(s)) return kUnreachable;
  return distances(g)[index(s)];
}

double discounted_value(int steps, double gamma) {
  if (steps < 0) return -1.0 / (1.0 - gamma);
  return -(1.0 - std::pow(gamma, steps)) / (1.0 - gamma);
}

double OracleValueTable::value(Cell s, Cell g) const { return discounted_value(steps(s, g), gamma_); }

OracleValueTable oracle_values(const env::WallWorld& world, double resolution, double gamma) {
  return OracleValueTable(world, resolution, gamma);
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("spearman: size mismatch");
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

AlignmentResult value_alignment(const PairDistance& model_distance, const OracleValueTable& table,
                                std::size_t n_pairs, Rng& rng) {
  const auto& cells = table.free_cells();
  if (cells.empty()) throw DataError("oracle table has no free cells");
  AlignmentResult r;
  std::vector<env::Vec2> sp, gp;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Cell s = cells[uniform_index(rng, cells.size())];
    const Cell g = cells[uniform_index(rng, cells.size())];
    r.starts.push_back(s);
    r.goals.push_back(g);
    r.oracle_distance.push_back(-table.value(s, g));
    sp.push_back(table.center(s));
    gp.push_back(table.center(g));
  }
  r.model_distance = model_distance(sp, gp);
  if (r.model_distance.size() != n_pairs) throw DataError("model distance returned wrong count");
  r.rho = spearman(r.model_distance, r.oracle_distance);
  return r;
}

PairDistance model_pair_distance(const model::WorldModel& m, const env::WallWorld& world) {
  return [&m, &world](const std::vector<env::Vec2>& s, const std::vector<env::Vec2>& g) {
    const std::size_t n = s.size();
    std::vector<double> out;
    out.reserve(n);
    constexpr std::size_t kChunk = 128;
    for (std::size_t lo = 0; lo < n; lo += kChunk) {
      const std::size_t nb = std::min(kChunk, n - lo);
      const auto first = world.render(s[lo]).image;
      ad::Shape shape{nb, first.dim(0), first.dim(1), first.dim(2)};
      ad::Tensor<float> simg(shape), gimg(shape);
      const std::size_t per = first.size();
      for (std::size_t k = 0; k < nb; ++k) {
        const auto a = world.render(s[lo + k]).image;
        const auto b = world.render(g[lo + k]).image;
        std::copy(a.ptr(), a.ptr() + per, simg.ptr() + k * per);
        std::copy(b.ptr(), b.ptr() + per, gimg.ptr() + k * per);
      }
      const auto d = m.distance(m.encode(simg), m.encode(gimg));
      for (std::size_t k = 0; k < nb; ++k) out.push_back(d[k]);
    }
    return out;
  };
}

}  // namespace vgjepa::eval
