// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/eval/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "vgjepa/common/error.hpp"

namespace vgjepa::eval {

using nlohmann::json;

std::size_t BenchmarkSpec::instance_count() const {
  if (instances > 0) return instances;
  return regime == data::Regime::kMaze ? 80 : 200;
}

void BenchmarkSpec::validate() const {
  plan.validate();
  if (maze_min_cells < 0) throw ConfigError("maze_min_cells must be non-negative");
}

BenchmarkSpec BenchmarkSpec::defaults(data::Regime r) {
  BenchmarkSpec s;
  s.regime = r;
  s.plan = plan::PlanConfig::defaults(r);
  const auto d = data::DatasetConfig::defaults(r);
  s.wall = d.wall;
  s.maze = d.maze;
  return s;
}

void to_json(json& j, const BenchmarkSpec& s) {
  j = json{{"regime", data::to_string(s.regime)},
           {"instances", s.instance_count()},
           {"seed", s.seed},
           {"plan", s.plan},
           {"wall", s.wall},
           {"maze", s.maze},
           {"maze_min_cells", s.maze_min_cells},
           {"model", s.model}};
}

void from_json(const json& j, BenchmarkSpec& s) {
  try {
    if (j.contains("regime")) s = BenchmarkSpec::defaults(data::parse_regime(j.at("regime").get<std::string>()));
    for (const auto& [k, v] : j.items()) {
      if (k == "regime") continue;
      if (k == "instances") s.instances = v.get<std::size_t>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else if (k == "plan") s.plan = v.get<plan::PlanConfig>();
      else if (k == "wall") s.wall = v.get<env::WallConfig>();
      else if (k == "maze") s.maze = v.get<env::MazeConfig>();
      else if (k == "maze_min_cells") s.maze_min_cells = v.get<int>();
      else if (k == "model") s.model = v.get<std::string>();
      else throw ConfigError("unknown benchmark key: " + k);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad benchmark spec: ") + e.what());
  }
  s.validate();
}

namespace {

constexpr std::uint64_t kInstanceStream = 31;
constexpr std::uint64_t kPlanStream = 32;
constexpr int kMazeAttempts = 200;

BenchmarkInstance wall_instance(const BenchmarkSpec& spec, std::size_t i) {
  const std::uint64_t s = derive_seed(spec.seed, kInstanceStream, i);
  env::WallWorld world = env::sample_wall_world(spec.wall, s);
  Rng rng = make_rng(derive_seed(s, 1));
  const int side = uniform01(rng) < 0.5 ? -1 : 1;
  const env::Vec2 a = env::sample_wall_position(world, rng, side);
  const env::Vec2 b = env::sample_wall_position(world, rng, -side);
  return BenchmarkInstance{i, plan::EnvInstance(std::move(world)), {a.x, a.y, 0, 0},
                           {b.x, b.y, 0, 0}, derive_seed(spec.seed, kPlanStream, i)};
}

BenchmarkInstance maze_instance(const BenchmarkSpec& spec, std::size_t i) {
  const std::uint64_t s = derive_seed(spec.seed, kInstanceStream, i);
  // Redraw the layout when no pair is far enough apart.
  for (std::uint64_t w = 0;; ++w) {
    env::MazeWorld world = env::sample_maze_world(spec.maze, derive_seed(s, 2, w), env::MazeSplit::kEval);
    Rng rng = make_rng(derive_seed(s, 3, w));
    for (int t = 0; t < kMazeAttempts; ++t) {
      const env::MazeState a = env::sample_maze_state(world, rng);
      const env::MazeState b = env::sample_maze_state(world, rng);
      if (world.cell_distance(a.pos, b.pos) >= spec.maze_min_cells)
        return BenchmarkInstance{i, plan::EnvInstance(std::move(world)),
                                 {a.pos.x, a.pos.y, a.vel.x, a.vel.y},
                                 {b.pos.x, b.pos.y, 0, 0}, derive_seed(spec.seed, kPlanStream, i)};
    }
    if (w > 1000) throw DataError("no maze layout admits start/goal pairs that far apart");
  }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first
// failure.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
          next.store(n);
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << s;
  if (!f) throw DataError("write failed: " + p.string());
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(6) << v;
  return o.str();
}

}  // namespace

std::vector<BenchmarkInstance> make_instances(const BenchmarkSpec& spec) {
  spec.validate();
  const std::size_t n = spec.instance_count();
  std::vector<BenchmarkInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(spec.regime == data::Regime::kMaze ? maze_instance(spec, i) : wall_instance(spec, i));
  return out;
}

std::size_t BenchmarkResult::successes() const {
  return static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const auto& r) { return r.success; }));
}

double success_rate(const std::vector<plan::PlanResult>& results) {
  if (results.empty()) return 0.0;
  std::size_t k = 0;
  for (const auto& r : results) k += r.success ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(results.size());
}

BenchmarkResult run_benchmark(const BenchmarkSpec& spec, const plan::LatentModel& m,
                              unsigned threads) {
  const auto inst = make_instances(spec);
  std::vector<std::optional<plan::PlanResult>> slots(inst.size());
  parallel_for(inst.size(), threads, [&](std::size_t i) {
    const auto& b = inst[i];
    slots[i] = plan::mpc_plan(b.env, m, b.start, b.goal, spec.plan, b.plan_seed);
  });
  BenchmarkResult r;
  r.spec = spec;
  for (auto& s : slots) r.results.push_back(std::move(*s));
  r.success_rate = success_rate(r.results);
  return r;
}

void write_benchmark(const BenchmarkResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json summary{{"spec", r.spec},
                     {"instances", r.results.size()},
                     {"successes", r.successes()},
                     {"success_rate", r.success_rate},
                     {"success_threshold", r.results.empty() ? 0.0 : r.results.front().threshold},
                     {"threshold_note",
                      "the goal tolerance is a configuration choice; success rates are sensitive to it"}};
  write_text(dir / "benchmark.json", summary.dump(2) + "\n");
  std::string lines;
  for (std::size_t i = 0; i < r.results.size(); ++i) {
    json row = r.results[i].to_json();
    row["index"] = i;
    lines += row.dump() + "\n";
  }
  write_text(dir / "instances.jsonl", lines);
}

BenchmarkResult read_benchmark(const std::filesystem::path& dir) {
  std::ifstream sf(dir / "benchmark.json");
  if (!sf) throw DataError("missing " + (dir / "benchmark.json").string());
  json summary;
  try {
    sf >> summary;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad benchmark.json: ") + e.what());
  }
  BenchmarkResult r;
  r.spec = summary.at("spec").get<BenchmarkSpec>();
  std::ifstream lf(dir / "instances.jsonl");
  if (!lf) throw DataError("missing " + (dir / "instances.jsonl").string());
  std::string line;
  while (std::getline(lf, line)) {
    if (line.empty()) continue;
    try {
      r.results.push_back(plan::PlanResult::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(std::string("bad instances.jsonl line: ") + e.what());
    }
  }
  r.success_rate = success_rate(r.results);
  return r;
}

std::string to_string(SweepParam p) { return p == SweepParam::kGamma ? "gamma" : "tau"; }

SweepParam parse_sweep_param(const std::string& s) {
  if (s == "gamma") return SweepParam::kGamma;
  if (s == "tau") return SweepParam::kTau;
  throw ConfigError("sweep parameter must be gamma or tau, got " + s);
}

std::string SweepTable::csv() const {
  std::ostringstream o;
  o << "# param=" << to_string(param) << "\n# mode=" << mode << "\n# values=";
  for (std::size_t i = 0; i < values.size(); ++i) o << (i ? "," : "") << fmt(values[i]);
  o << "\nvalue,success_rate,config_hash\n";
  for (const auto& r : rows) o << fmt(r.value) << "," << fmt(r.success_rate) << "," << r.config_hash << "\n";
  return o.str();
}

std::string SweepTable::svg() const {
  const double w = 480, h = 320, l = 60, rgt = 20, top = 20, bot = 50;
  double lo = 0, hi = 1;
  if (!rows.empty()) {
    lo = hi = rows.front().value;
    for (const auto& r : rows) {
      lo = std::min(lo, r.value);
      hi = std::max(hi, r.value);
    }
    if (hi == lo) {
      lo -= 0.01;
      hi += 0.01;
    }
  }
  auto px = [&](double v) { return l + (v - lo) / (hi - lo) * (w - l - rgt); };
  auto py = [&](double s) { return top + (1.0 - s) * (h - top - bot); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << l << "\" y1=\"" << py(0) << "\" x2=\"" << w - rgt << "\" y2=\"" << py(0)
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << l << "\" y1=\"" << py(0) << "\" x2=\"" << l << "\" y2=\"" << py(1)
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double s = t / 4.0;
    o << "<text x=\"" << l - 8 << "\" y=\"" << py(s) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
      << fmt(s) << "</text>\n";
  }
  o << "<text x=\"" << (l + w - rgt) / 2 << "\" y=\"" << h - 12 << "\" font-size=\"13\" text-anchor=\"middle\">"
    << to_string(param) << " (" << mode << ")</text>\n"
    << "<text x=\"14\" y=\"" << (top + h - bot) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (top + h - bot) / 2 << ")\">success rate</text>\n";
  if (!rows.empty()) {
    o << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) o << px(r.value) << "," << py(r.success_rate) << " ";
    o << "\"/>\n";
    for (const auto& r : rows) {
      o << "<circle cx=\"" << px(r.value) << "\" cy=\"" << py(r.success_rate) << "\" r=\"3\" fill=\"#1f77b4\"/>\n"
        << "<text x=\"" << px(r.value) << "\" y=\"" << py(0) + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
        << fmt(r.value) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

SweepTable sweep(SweepParam param, const std::vector<double>& values,
                 const train::TrainConfig& base, const data::TrajectoryDataset& ds,
                 const BenchmarkSpec& bench, const std::filesystem::path& out_dir,
                 unsigned threads) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (double v : values)
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("sweep values must lie in (0, 1), got " + fmt(v));
  const auto mode = train::find_mode(base.mode);
  if (!mode.vf) throw ConfigError("sweeps apply to value-function modes, not " + mode.name);

  std::vector<train::TrainConfig> cfgs;
  for (double v : values) {
    train::TrainConfig c = base;
    (param == SweepParam::kGamma ? c.losses.gamma : c.losses.tau) = v;
    c.validate();
    cfgs.push_back(std::move(c));
  }
  auto run_dir = [&](std::size_t i) {
    return out_dir / (to_string(param) + "_" + fmt(values[i]));
  };

  // Independent training jobs, one worker each.
  std::vector<std::optional<train::TrainResult>> runs(values.size());
  parallel_for(values.size(), threads, [&](std::size_t i) {
    train::TrainOptions opts;
    if (!out_dir.empty()) opts.out_dir = run_dir(i);
    runs[i] = train::train(cfgs[i], ds, opts);
    if (!out_dir.empty()) train::write_run(*runs[i], run_dir(i));
  });

  SweepTable t;
  t.param = param;
  t.values = values;
  t.mode = mode.name;
  for (std::size_t i = 0; i < values.size(); ++i) {
    BenchmarkSpec b = bench;
    b.model = mode.name + " " + to_string(param) + "=" + fmt(values[i]);
    const auto res = run_benchmark(b, plan::latent_model(runs[i]->model), threads);
    if (!out_dir.empty()) write_benchmark(res, run_dir(i) / "benchmark");
    t.rows.push_back({values[i], res.success_rate, runs[i]->record.config_hash});
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "sweep.csv", t.csv());
    write_text(out_dir / "sweep.svg", t.svg());
  }
  return t;
}

}  // namespace vgjepa::eval
