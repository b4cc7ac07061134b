// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>

#include "vgjepa/common/binary_io.hpp"
#include "vgjepa/dataset/batch.hpp"
#include "vgjepa/dataset/dataset.hpp"

using namespace vgjepa;
using namespace vgjepa::data;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_wall(Regime r, std::size_t n, std::size_t len = 24) {
  DatasetConfig c = DatasetConfig::defaults(r);
  c.num_trajectories = n;
  c.length = len;
  c.wall.image_size = 16;
  return c;
}

DatasetConfig small_maze(std::size_t n, std::size_t len = 24) {
  DatasetConfig c = DatasetConfig::defaults(Regime::kMaze);
  c.num_trajectories = n;
  c.length = len;
  c.maze.image_size = 16;
  return c;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("vgjepa_test_" + name);
  fs::remove_all(p);
  return p;
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

TEST(VonMises, CircularVarianceMatchesBesselRatio) {
  const double kappa = 5.0;
  const double a1 = std::cyl_bessel_i(1.0, kappa) / std::cyl_bessel_i(0.0, kappa);
  const double a2 = std::cyl_bessel_i(2.0, kappa) / std::cyl_bessel_i(0.0, kappa);
  const double expected = 1.0 - a1;
  // Var(cos) = E[cos^2] - E[cos]^2 with E[cos^2] = (1 + A2) / 2.
  const double var_cos = 0.5 * (1.0 + a2) - a1 * a1;
  const std::size_t n = 100000;
  Rng rng = make_rng(3);
  double sc = 0, ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double th = sample_von_mises(kappa, rng);
    ASSERT_LE(std::abs(th), std::numbers::pi);
    sc += std::cos(th);
    ss += std::sin(th);
  }
  const double got = 1.0 - std::hypot(sc, ss) / static_cast<double>(n);
  EXPECT_NEAR(got, expected, 3.0 * std::sqrt(var_cos / static_cast<double>(n)));
}

TEST(VonMises, SymmetricAboutZero) {
  Rng rng = make_rng(9);
  std::size_t pos = 0;
  const std::size_t n = 40000;
  for (std::size_t i = 0; i < n; ++i) pos += sample_von_mises(5.0, rng) > 0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(pos) / n, 0.5, 3.0 * 0.5 / std::sqrt(double(n)));
}

TEST(WallDataset, ShapesAndLengths) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 6), 1);
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.length(), 24u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.info(i).poses.size(), ds.info(i).actions.size() + 1);
  }
  const auto obs = ds.observation(0, 0);
  EXPECT_EQ(obs.image.shape(), (ad::Shape{2, 16, 16}));
  EXPECT_TRUE(obs.proprio.empty());
  EXPECT_EQ(ds.regime(), Regime::kWS);
}

TEST(WallDataset, NormsClippedPerRegime) {
  for (Regime r : {Regime::kWS, Regime::kWB}) {
    const auto ds = generate_dataset(small_wall(r, 40), 5);
    const NormDistribution nd = wall_norms(r);
    double lo = 1e9, hi = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (const auto& a : ds.info(i).actions) {
        lo = std::min(lo, a.norm());
        hi = std::max(hi, a.norm());
      }
    EXPECT_GE(lo, nd.lo - 1e-6);
    EXPECT_LE(hi, nd.hi + 1e-6);
    // Clipping is hit at both ends with this many draws.
    EXPECT_LT(lo, nd.lo + 1e-3);
    EXPECT_GT(hi, nd.hi - 1e-3);
  }
  EXPECT_DOUBLE_EQ(wall_norms(Regime::kWS).mean, 1.0);
  EXPECT_DOUBLE_EQ(wall_norms(Regime::kWS).sd, 0.4);
  EXPECT_DOUBLE_EQ(wall_norms(Regime::kWB).mean, 2.0);
  EXPECT_DOUBLE_EQ(wall_norms(Regime::kWB).sd, 0.8);
}

TEST(WallDataset, CrossingQuotaAndLabels) {
  const auto cfg = small_wall(Regime::kWS, 40, 64);
  const auto ds = generate_dataset(cfg, 11);
  std::size_t crossing = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& info = ds.info(i);
    const auto world = env::WallWorld::from_json(info.world);
    bool crossed = false;
    const int side = world.side_of(info.poses.front().pos());
    for (const auto& p : info.poses) crossed = crossed || world.side_of(p.pos()) != side;
    EXPECT_EQ(crossed, info.crossed_door) << "trajectory " << i;
    crossing += info.crossed_door ? 1 : 0;
  }
  EXPECT_EQ(crossing, 20u);
  EXPECT_EQ(ds.manifest()["counts"]["crossing"].get<std::size_t>(), 20u);
}

TEST(WallDataset, DirectionNoiseIsVonMises) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 60, 64), 21);
  const double kappa = 5.0;
  const double a1 = std::cyl_bessel_i(1.0, kappa) / std::cyl_bessel_i(0.0, kappa);
  const double a2 = std::cyl_bessel_i(2.0, kappa) / std::cyl_bessel_i(0.0, kappa);
  double sc = 0, ss = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double base = ds.info(i).base_direction;
    for (const auto& a : ds.info(i).actions) {
      const double d = wrap_angle(std::atan2(a.y, a.x) - base);
      sc += std::cos(d);
      ss += std::sin(d);
      ++n;
    }
  }
  const double got = 1.0 - std::hypot(sc, ss) / static_cast<double>(n);
  const double sigma = std::sqrt((0.5 * (1.0 + a2) - a1 * a1) / static_cast<double>(n));
  EXPECT_NEAR(got, 1.0 - a1, 3.0 * sigma);
}

TEST(WallDataset, ReplayReproducesPoses) {
  const auto ds = generate_dataset(small_wall(Regime::kWB, 10, 64), 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& info = ds.info(i);
    const auto world = env::WallWorld::from_json(info.world);
    env::Vec2 p = info.poses.front().pos();
    for (std::size_t t = 0; t < info.actions.size(); ++t) {
      p = world.step(p, info.actions[t]);
      ASSERT_NEAR(p.x, info.poses[t + 1].x, 1e-5);
      ASSERT_NEAR(p.y, info.poses[t + 1].y, 1e-5);
      ASSERT_TRUE(world.legal(p));
    }
  }
}

TEST(WallDataset, FramesMatchRenderedPoses) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 3), 8);
  const auto world = env::WallWorld::from_json(ds.info(2).world);
  const auto expect = world.render(ds.info(2).poses[7].pos());
  EXPECT_EQ(ds.observation(2, 7), expect);
}

TEST(WallDataset, DeterministicAndThreadIndependent) {
  const auto cfg = small_wall(Regime::kWS, 8);
  const auto a = generate_dataset(cfg, 77, 1);
  const auto b = generate_dataset(cfg, 77, 3);
  const auto c = generate_dataset(cfg, 78, 1);
  EXPECT_EQ(a.manifest(), b.manifest());
  EXPECT_NE(a.manifest(), c.manifest());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t t = 0; t < a.length(); ++t)
      ASSERT_TRUE(std::ranges::equal(a.image(i, t), b.image(i, t)));
}

TEST(WallDataset, QuotaUnreachableIsReported) {
  auto cfg = small_wall(Regime::kWS, 2, 3);
  cfg.max_attempts_per_trajectory = 2;
  EXPECT_THROW(generate_dataset(cfg, 1), DataError);
}

TEST(WallDataset, EmptyDatasetRejected) {
  auto cfg = small_wall(Regime::kWS, 0);
  EXPECT_THROW(generate_dataset(cfg, 1), ConfigError);
}

TEST(MazeDataset, ActionsLayoutsAndLegality) {
  const auto ds = generate_dataset(small_maze(30), 2);
  std::set<std::vector<std::uint8_t>> layouts;
  std::set<int> ids;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& info = ds.info(i);
    const auto world = env::MazeWorld::from_json(info.world);
    layouts.insert(world.layout().open);
    ids.insert(info.layout_id);
    env::MazeState st{info.poses.front().pos(), {0, 0}};
    for (std::size_t t = 0; t < info.actions.size(); ++t) {
      ASSERT_LT(info.actions[t].norm(), 5.0);
      st = world.step(st, info.actions[t]);
      ASSERT_NEAR(st.pos.x, info.poses[t + 1].x, 1e-5);
      ASSERT_NEAR(st.pos.y, info.poses[t + 1].y, 1e-5);
      ASSERT_NEAR(st.vel.x, info.poses[t + 1].vx, 1e-5);
      ASSERT_TRUE(world.legal(info.poses[t + 1].pos()));
    }
  }
  EXPECT_EQ(layouts.size(), 5u);
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_EQ(ds.manifest()["layouts"].size(), 5u);
  const auto obs = ds.observation(0, 3);
  EXPECT_EQ(obs.image.dim(0), 3u);
  ASSERT_EQ(obs.proprio.size(), 2u);
  EXPECT_FLOAT_EQ(obs.proprio[0], static_cast<float>(ds.info(0).poses[3].vx));
}

TEST(DatasetIO, RoundTripIsByteIdentical) {
  for (const auto& cfg : {small_wall(Regime::kWS, 5), small_maze(4)}) {
    const auto ds = generate_dataset(cfg, 13);
    const fs::path d1 = temp_dir("rt1"), d2 = temp_dir("rt2");
    write_dataset(ds, d1);
    const auto back = read_dataset(d1);
    write_dataset(back, d2);
    EXPECT_EQ(io::read_file(d1 / "trajectories.bin"), io::read_file(d2 / "trajectories.bin"));
    EXPECT_EQ(io::read_file(d1 / "manifest.json"), io::read_file(d2 / "manifest.json"));
    EXPECT_EQ(back.observation(3, 5), ds.observation(3, 5));
    EXPECT_EQ(back.info(2).actions.size(), ds.info(2).actions.size());
    EXPECT_NEAR(back.info(2).poses[4].x, ds.info(2).poses[4].x, 1e-5);
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
}

TEST(DatasetIO, StreamingWriteMatchesInMemory) {
  const auto cfg = small_wall(Regime::kWB, 6);
  const fs::path d1 = temp_dir("stream1"), d2 = temp_dir("stream2");
  generate_to_disk(cfg, 5, d1, 2);
  write_dataset(generate_dataset(cfg, 5), d2);
  EXPECT_EQ(io::read_file(d1 / "trajectories.bin"), io::read_file(d2 / "trajectories.bin"));
  EXPECT_EQ(io::read_file(d1 / "manifest.json"), io::read_file(d2 / "manifest.json"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(DatasetIO, RegenerateFromManifestSeed) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 4), 99);
  DatasetConfig cfg = ds.manifest()["config"].get<DatasetConfig>();
  const auto again = generate_dataset(cfg, ds.manifest()["seed"].get<std::uint64_t>());
  EXPECT_EQ(again.manifest(), ds.manifest());
  EXPECT_TRUE(std::ranges::equal(again.image(3, 10), ds.image(3, 10)));
}

TEST(DatasetIO, CorruptFilesRejected) {
  const fs::path d = temp_dir("corrupt");
  write_dataset(generate_dataset(small_wall(Regime::kWS, 2), 1), d);
  std::string bin = io::read_file(d / "trajectories.bin");
  io::write_file(d / "trajectories.bin", bin.substr(0, bin.size() / 2));
  EXPECT_THROW(read_dataset(d), DataError);
  io::write_file(d / "manifest.json", "{not json");
  EXPECT_THROW(read_dataset(d), DataError);
  EXPECT_THROW(read_dataset(temp_dir("missing")), DataError);
  fs::remove_all(d);
}

TEST(Batch, SingleSegmentIsContiguous) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 3), 2);
  Rng rng = make_rng(1);
  const Batch b = sample_batch(ds, 1, rng);
  ASSERT_EQ(b.segments.size(), 1u);
  const auto states = segment_states(b);
  ASSERT_EQ(states.size(), kSegmentLength);
  for (std::size_t t = 0; t < states.size(); ++t) {
    EXPECT_EQ(states[t].traj, b.segments[0].traj);
    EXPECT_EQ(states[t].t, b.segments[0].start + t);
  }
  EXPECT_LE(b.segments[0].start + kSegmentLength, ds.length());
}

TEST(Batch, GoalCandidatesContainFinalStates) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 5), 2);
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Batch b = sample_batch(ds, 8, rng);
    ASSERT_EQ(b.goal_candidates.size(), 16u);
    ASSERT_EQ(b.num_final_goals, 8u);
    for (std::size_t i = 0; i < b.segments.size(); ++i) {
      const StateRef final_state{b.segments[i].traj, ds.length() - 1};
      EXPECT_EQ(b.goal_candidates[i], final_state);
    }
    for (std::size_t i = 8; i < 16; ++i) {
      const StateRef g = b.goal_candidates[i];
      bool inside = false;
      for (const auto& s : b.segments)
        inside = inside || (s.traj == g.traj && g.t >= s.start && g.t < s.start + b.length);
      EXPECT_TRUE(inside);
    }
  }
}

TEST(Batch, WindowStartsUniform) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 2, 40), 2);
  const std::size_t starts = ds.length() - kSegmentLength + 1;
  std::vector<double> counts(starts, 0.0);
  Rng rng = make_rng(17);
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) counts[sample_batch(ds, 1, rng).segments[0].start] += 1;
  const double p = 1.0 / static_cast<double>(starts);
  const double mean = draws * p;
  const double sd = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (double c : counts) {
    EXPECT_NEAR(c, mean, 3.0 * sd);
    chi2 += (c - mean) * (c - mean) / mean;
  }
  // 99.9% quantile of chi-squared with 24 degrees of freedom is 51.18.
  EXPECT_LT(chi2, 51.18);
}

TEST(Batch, TensorsGatherCorrectRows) {
  const auto ds = generate_dataset(small_maze(3), 5);
  Rng rng = make_rng(2);
  const Batch b = sample_batch(ds, 2, rng);
  const auto states = segment_states(b);
  const auto imgs = gather_images(ds, states);
  const auto prop = gather_proprio(ds, states);
  const auto acts = segment_actions(ds, b);
  EXPECT_EQ(imgs.shape(), (ad::Shape{32, 3, 16, 16}));
  EXPECT_EQ(prop.shape(), (ad::Shape{32, 2}));
  EXPECT_EQ(acts.shape(), (ad::Shape{30, 2}));
  const std::size_t row = kSegmentLength + 3;
  auto src = ds.image(b.segments[1].traj, b.segments[1].start + 3);
  EXPECT_TRUE(std::equal(src.begin(), src.end(), imgs.ptr() + row * src.size()));
  EXPECT_FLOAT_EQ(acts[(15 + 2) * 2],
                  static_cast<float>(ds.info(b.segments[1].traj).actions[b.segments[1].start + 2].x));
}

TEST(Batch, RejectsShortTrajectories) {
  const auto ds = generate_dataset(small_wall(Regime::kWS, 2, 8), 2);
  Rng rng = make_rng(1);
  EXPECT_THROW(sample_batch(ds, 4, rng), DataError);
}
