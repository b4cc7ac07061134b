// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "vgjepa/common/rng.hpp"
#include "vgjepa/env/wall.hpp"
#include "vgjepa/model/model.hpp"

namespace vgjepa::eval {

struct Cell {
  long col = 0;
  long row = 0;
  friend bool operator==(Cell, Cell) = default;
};

// Shortest-path step counts on the free cells of a wall world, discretized
// into square cells of side `resolution`, with 8-connected unit steps.
class OracleValueTable {
 public:
  static constexpr int kUnreachable = -1;

  OracleValueTable(const env::WallWorld& world, double resolution, double gamma);

  double resolution() const noexcept { return resolution_; }
  double gamma() const noexcept { return gamma_; }
  long cells_per_side() const noexcept { return n_; }
  bool free(Cell c) const;
  Cell cell_of(env::Vec2 p) const;
  env::Vec2 center(Cell c) const;
  const std::vector<Cell>& free_cells() const noexcept { return free_cells_; }
  std::vector<Cell> neighbors(Cell c) const;

  // Step counts from every cell to `goal` (row-major; kUnreachable for
  // blocked or disconnected cells). Throws DataError for a blocked goal.
  const std::vector<int>& distances(Cell goal) const;
  int steps(Cell s, Cell g) const;
  // -(1 - gamma^d) / (1 - gamma); -1 / (1 - gamma) when unreachable.
  double value(Cell s, Cell g) const;

 private:
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row * n_ + c.col); }

  double resolution_;
  double gamma_;
  long n_;
  std::vector<std::uint8_t> free_;
  std::vector<Cell> free_cells_;
  mutable std::unordered_map<std::size_t, std::vector<int>> cache_;
};

OracleValueTable oracle_values(const env::WallWorld& world, double resolution, double gamma);

// Discounted value of a d-step path under the unit reaching cost.
double discounted_value(int steps, double gamma);

// Spearman rank correlation with average ranks for ties. NaN when either
// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct AlignmentResult {
  double rho = 0.0;
  std::vector<Cell> starts;
  std::vector<Cell> goals;
  std::vector<double> model_distance;   // -V_theta
  std::vector<double> oracle_distance;  // -V*
  bool degenerate() const { return !(rho == rho); }
};

// Model-side distance for batches of (start, goal) positions.
using PairDistance = std::function<std::vector<double>(const std::vector<env::Vec2>&,
                                                       const std::vector<env::Vec2>&)>;

// Rank correlation between -V_theta and -V* over random pairs of free cells
// (cell centres are the rendered poses).
AlignmentResult value_alignment(const PairDistance& model_distance,
                                const OracleValueTable& table, std::size_t n_pairs, Rng& rng);

// Distance d(E(render(s)), E(render(g))) from a trained model.
PairDistance model_pair_distance(const model::WorldModel& m, const env::WallWorld& world);

}  // namespace vgjepa::eval
