// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "vgjepa/eval/benchmark.hpp"
#include "vgjepa/eval/oracle.hpp"

using namespace vgjepa;
using namespace vgjepa::eval;
using ad::Shape;
using ad::Tensor;
using nlohmann::json;

namespace {

env::WallWorld world(std::uint64_t seed = 4) { return env::sample_wall_world(env::WallConfig{}, seed); }

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("vgjepa_eval_" + name);
  std::filesystem::remove_all(d);
  return d;
}

// Agent-disc centroid as latent, additive dynamics, Euclidean cost.
plan::LatentModel point_model() {
  plan::LatentModel m;
  m.encode = [](const env::Observation& o) {
    const std::size_t res = o.image.dim(1);
    const double scale = static_cast<double>(res) / 64.0;
    double w = 0, x = 0, y = 0;
    for (std::size_t r = 0; r < res; ++r)
      for (std::size_t c = 0; c < res; ++c) {
        const double v = o.image[r * res + c];
        w += v;
        x += v * (static_cast<double>(c) + 0.5) / scale;
        y += v * (static_cast<double>(r) + 0.5) / scale;
      }
    return Tensor<float>(Shape{1, 2}, {static_cast<float>(x / w), static_cast<float>(y / w)});
  };
  m.predict = [](const Tensor<float>& z, const Tensor<float>& a) {
    Tensor<float> out = z;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a[i];
    return out;
  };
  m.goal_embedding = m.encode;
  m.cost = [](const Tensor<float>& z, const Tensor<float>& g) {
    Tensor<float> out(Shape{z.dim(0)});
    for (std::size_t i = 0; i < z.dim(0); ++i)
      out[i] = static_cast<float>(std::hypot(z[2 * i] - g[0], z[2 * i + 1] - g[1]));
    return out;
  };
  return m;
}

BenchmarkSpec small_spec(data::Regime r = data::Regime::kWS) {
  BenchmarkSpec s = BenchmarkSpec::defaults(r);
  s.instances = 6;
  s.seed = 21;
  s.plan.horizon = 8;
  s.plan.num_samples = 32;
  s.plan.total_steps = 25;
  s.plan.burn_in_iterations = 3;
  return s;
}

}  // namespace

TEST(DiscountedValue, GeometricSeries) {
  EXPECT_EQ(discounted_value(0, 0.98), 0.0);
  EXPECT_NEAR(discounted_value(3, 0.98), -(1.0 + 0.98 + 0.98 * 0.98), 1e-12);
  EXPECT_NEAR(discounted_value(3, 0.98), -2.9404, 1e-9);
  EXPECT_NEAR(discounted_value(OracleValueTable::kUnreachable, 0.98), -50.0, 1e-9);
  for (int d = 1; d < 40; ++d)
    EXPECT_NEAR(discounted_value(d, 0.93), -1.0 + 0.93 * discounted_value(d - 1, 0.93), 1e-12);
}

TEST(OracleValues, BellmanIdentityOnEveryFreeCell) {
  const auto w = world();
  const auto table = oracle_values(w, 1.0, 0.98);
  Rng rng = make_rng(3);
  for (int k = 0; k < 4; ++k) {
    const Cell g = table.free_cells()[uniform_index(rng, table.free_cells().size())];
    EXPECT_EQ(table.value(g, g), 0.0);
    for (const Cell s : table.free_cells()) {
      if (s == g) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (const Cell n : table.neighbors(s)) best = std::max(best, table.value(n, g));
      ASSERT_NEAR(table.value(s, g), -1.0 + 0.98 * best, 1e-12) << s.col << "," << s.row;
    }
  }
}

TEST(OracleValues, ChebyshevInObstacleFreeBoxes) {
  const auto w = world(9);
  const OracleValueTable table(w, 1.0, 0.98);
  Rng rng = make_rng(8);
  int checked = 0;
  for (int k = 0; k < 300; ++k) {
    const auto& cells = table.free_cells();
    const Cell s = cells[uniform_index(rng, cells.size())];
    const Cell g = cells[uniform_index(rng, cells.size())];
    const long cheb = std::max(std::labs(s.col - g.col), std::labs(s.row - g.row));
    EXPECT_GE(table.steps(s, g), cheb);
    bool box_free = true;
    for (long c = std::min(s.col, g.col); c <= std::max(s.col, g.col) && box_free; ++c)
      for (long r = std::min(s.row, g.row); r <= std::max(s.row, g.row); ++r)
        if (!table.free({c, r})) {
          box_free = false;
          break;
        }
    if (box_free) {
      EXPECT_EQ(table.steps(s, g), cheb);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(OracleValues, CrossingTheWallDetoursThroughTheDoor) {
  const auto w = world(2);
  const OracleValueTable table(w, 1.0, 0.98);
  // Cells level with the door cross directly; far from it they detour.
  const Cell a = table.cell_of({w.wall_x() - 6.0, w.door_center_y()});
  const Cell b = table.cell_of({w.wall_x() + 6.0, w.door_center_y()});
  EXPECT_EQ(table.steps(a, b), b.col - a.col);
  const double far_y = w.door_center_y() > 32 ? 4.0 : 60.0;
  const Cell c = table.cell_of({w.wall_x() - 6.0, far_y});
  const Cell d = table.cell_of({w.wall_x() + 6.0, far_y});
  EXPECT_GT(table.steps(c, d), std::labs(d.col - c.col) + 10);
}

TEST(OracleValues, BlockedGoalAndBadResolution) {
  const auto w = world();
  const OracleValueTable table(w, 1.0, 0.98);
  const Cell wall = table.cell_of({w.wall_x(), w.door_center_y() > 32 ? 2.0 : 62.0});
  EXPECT_FALSE(table.free(wall));
  EXPECT_THROW(table.distances(wall), DataError);
  EXPECT_THROW(OracleValueTable(w, 3.0, 0.98), ConfigError);
}

TEST(Spearman, KnownValuesAndTies) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  // Average ranks for the tie; reference value from an independent implementation.
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5, 6}, {2, 1, 4, 4, 9, 7}), 0.8696565534786727, 1e-12);
  EXPECT_TRUE(std::isnan(spearman({1, 2, 3}, {5, 5, 5})));
  EXPECT_THROW(spearman({1, 2}, {1}), DataError);
}

TEST(ValueAlignment, OracleAgainstItselfIsPerfect) {
  const auto w = world();
  const OracleValueTable table(w, 1.0, 0.98);
  const PairDistance exact = [&](const std::vector<env::Vec2>& s, const std::vector<env::Vec2>& g) {
    std::vector<double> d;
    for (std::size_t i = 0; i < s.size(); ++i) d.push_back(-table.value(table.cell_of(s[i]), table.cell_of(g[i])));
    return d;
  };
  Rng rng = make_rng(1);
  const auto r = value_alignment(exact, table, 400, rng);
  EXPECT_DOUBLE_EQ(r.rho, 1.0);
  EXPECT_EQ(r.starts.size(), 400u);

  const PairDistance flat = [](const std::vector<env::Vec2>& s, const std::vector<env::Vec2>&) {
    return std::vector<double>(s.size(), 1.0);
  };
  EXPECT_TRUE(value_alignment(flat, table, 100, rng).degenerate());
}

TEST(BenchmarkSpec, DefaultsAndJson) {
  EXPECT_EQ(BenchmarkSpec::defaults(data::Regime::kWS).instance_count(), 200u);
  EXPECT_EQ(BenchmarkSpec::defaults(data::Regime::kWB).instance_count(), 200u);
  EXPECT_EQ(BenchmarkSpec::defaults(data::Regime::kMaze).instance_count(), 80u);
  const auto s = small_spec(data::Regime::kMaze);
  const json j = s;
  const json back = j.get<BenchmarkSpec>();
  EXPECT_EQ(back, j);
  EXPECT_THROW(json({{"regime", "ws"}, {"colour", 1}}).get<BenchmarkSpec>(), ConfigError);
}

TEST(Benchmark, WallInstancesStraddleTheWall) {
  auto s = small_spec();
  s.instances = 50;
  for (const auto& b : make_instances(s)) {
    const auto& w = b.env.wall();
    EXPECT_TRUE(w.legal(b.start.pos()));
    EXPECT_TRUE(w.legal(b.goal.pos()));
    EXPECT_NE(w.side_of(b.start.pos()), w.side_of(b.goal.pos()));
  }
}

TEST(Benchmark, MazeInstancesAreFarApartOnEvalLayouts) {
  auto s = small_spec(data::Regime::kMaze);
  s.instances = 30;
  const auto train = env::training_layouts(s.maze);
  for (const auto& b : make_instances(s)) {
    const auto& m = b.env.maze();
    EXPECT_GE(m.cell_distance(b.start.pos(), b.goal.pos()), 3);
    EXPECT_EQ(std::find(train.begin(), train.end(), m.layout()), train.end());
  }
}

TEST(Benchmark, InstancesSharedAcrossPlannersAndSeeded) {
  auto a = small_spec();
  auto b = a;
  b.plan.num_samples = 7;
  b.plan.sigma = 1.0;
  b.model = "other";
  const auto ia = make_instances(a), ib = make_instances(b);
  ASSERT_EQ(ia.size(), ib.size());
  for (std::size_t i = 0; i < ia.size(); ++i) {
    EXPECT_EQ(ia[i].env.to_json(), ib[i].env.to_json());
    EXPECT_EQ(ia[i].start.x, ib[i].start.x);
    EXPECT_EQ(ia[i].goal.y, ib[i].goal.y);
    EXPECT_EQ(ia[i].plan_seed, ib[i].plan_seed);
  }
  // A larger set extends the smaller one.
  b.instances = 10;
  EXPECT_EQ(make_instances(b)[3].env.to_json(), ia[3].env.to_json());
  b.seed = a.seed + 1;
  EXPECT_NE(make_instances(b)[0].env.to_json(), ia[0].env.to_json());
}

TEST(Benchmark, ThreadCountDoesNotChangeResults) {
  const auto s = small_spec();
  const auto one = run_benchmark(s, point_model(), 1);
  const auto four = run_benchmark(s, point_model(), 4);
  ASSERT_EQ(one.results.size(), s.instance_count());
  for (std::size_t i = 0; i < one.results.size(); ++i)
    EXPECT_EQ(one.results[i].to_json().dump(), four.results[i].to_json().dump());
  EXPECT_EQ(one.success_rate, four.success_rate);
  EXPECT_GE(one.success_rate, 0.0);
  EXPECT_LE(one.success_rate, 1.0);
}

TEST(Benchmark, PersistedResultsReproduceTheRate) {
  auto s = small_spec();
  s.plan.total_steps = 60;
  const auto r = run_benchmark(s, point_model(), 2);
  const auto dir = scratch_dir("persist");
  write_benchmark(r, dir);
  const auto back = read_benchmark(dir);
  EXPECT_EQ(back.success_rate, r.success_rate);
  EXPECT_EQ(back.successes(), r.successes());
  EXPECT_EQ(json(back.spec), json(r.spec));
  std::size_t by_hand = 0;
  for (const auto& p : back.results) by_hand += p.success ? 1 : 0;
  EXPECT_EQ(static_cast<double>(by_hand) / static_cast<double>(back.results.size()), r.success_rate);
  std::ifstream f(dir / "benchmark.json");
  const json summary = json::parse(f);
  EXPECT_EQ(summary.at("successes").get<std::size_t>(), r.successes());
  EXPECT_TRUE(summary.contains("success_threshold"));
}

TEST(Benchmark, EmptyResultsRateIsZero) { EXPECT_EQ(success_rate({}), 0.0); }

namespace {

const data::TrajectoryDataset& tiny_dataset() {
  static const data::TrajectoryDataset ds = [] {
    auto c = data::DatasetConfig::defaults(data::Regime::kWS);
    c.num_trajectories = 8;
    c.length = 12;
    c.wall.image_size = 16;
    return data::generate_dataset(c, 2);
  }();
  return ds;
}

train::TrainConfig tiny_train(const std::string& mode) {
  model::ModelConfig m;
  m.encoder.resolution = 16;
  m.encoder.widths = {4, 8};
  m.encoder.residual_blocks = {0, 1};
  m.encoder.pool = "flatten";
  m.encoder.latent_dim = 8;
  m.predictor.hidden = {16};
  m.head.kind = train::find_mode(mode).head;
  m.head.components = 2;
  m.head.component_dim = 4;
  return train::TrainConfig::from_json(json{{"mode", mode},
                                            {"steps", 6},
                                            {"batch_segments", 4},
                                            {"predictor_batch_segments", 4},
                                            {"segment_length", 6},
                                            {"model", m}},
                                       data::Regime::kWS);
}

BenchmarkSpec tiny_bench() {
  auto s = small_spec();
  s.instances = 3;
  s.wall.image_size = 16;
  s.plan.total_steps = 6;
  return s;
}

}  // namespace

TEST(Sweep, SingleValueMatchesOneBenchmark) {
  const auto base = tiny_train("VF");
  const auto dir = scratch_dir("sweep1");
  const auto t = sweep(SweepParam::kTau, {0.7}, base, tiny_dataset(), tiny_bench(), dir, 1);
  ASSERT_EQ(t.rows.size(), 1u);

  auto cfg = base;
  cfg.losses.tau = 0.7;
  const auto run = train::train(cfg, tiny_dataset());
  const auto direct = run_benchmark(tiny_bench(), plan::latent_model(run.model), 1);
  EXPECT_EQ(t.rows[0].success_rate, direct.success_rate);
  EXPECT_EQ(t.rows[0].config_hash, run.record.config_hash);
  const auto saved = read_benchmark(dir / "tau_0.7" / "benchmark");
  ASSERT_EQ(saved.results.size(), direct.results.size());
  for (std::size_t i = 0; i < saved.results.size(); ++i)
    EXPECT_EQ(saved.results[i].to_json().dump(), direct.results[i].to_json().dump());
  EXPECT_TRUE(std::filesystem::exists(dir / "sweep.svg"));
  EXPECT_TRUE(std::filesystem::exists(dir / "tau_0.7" / "model.ckpt"));
}

TEST(Sweep, GridRecordedVerbatim) {
  const auto t = sweep(SweepParam::kGamma, {0.9, 0.93, 0.98}, tiny_train("VF_quasi"), tiny_dataset(),
                       tiny_bench(), {}, 3);
  const std::string csv = t.csv();
  EXPECT_EQ(csv.rfind("# param=gamma\n# mode=VF_quasi\n# values=0.9,0.93,0.98\n", 0), 0u);
  ASSERT_EQ(t.rows.size(), 3u);
  std::set<std::string> hashes;
  for (const auto& r : t.rows) hashes.insert(r.config_hash);
  EXPECT_EQ(hashes.size(), 3u);
  EXPECT_NE(t.svg().find("<polyline"), std::string::npos);
}

TEST(Sweep, RejectsBadGrids) {
  const auto base = tiny_train("VF");
  EXPECT_THROW(sweep(SweepParam::kGamma, {}, base, tiny_dataset(), tiny_bench()), ConfigError);
  EXPECT_THROW(sweep(SweepParam::kGamma, {1.0}, base, tiny_dataset(), tiny_bench()), ConfigError);
  EXPECT_THROW(sweep(SweepParam::kTau, {0.5}, tiny_train("pred_VCReg"), tiny_dataset(), tiny_bench()),
               ConfigError);
  EXPECT_THROW(parse_sweep_param("lambda"), ConfigError);
}
