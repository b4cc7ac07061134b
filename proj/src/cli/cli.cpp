// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/cli/cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "vgjepa/cli/presets.hpp"
#include "vgjepa/common/binary_io.hpp"
#include "vgjepa/common/error.hpp"
#include "vgjepa/eval/benchmark.hpp"

namespace vgjepa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::filesystem::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

struct Globals {
  unsigned threads = 1;
  std::string log_level = "info";
  bool force = false;
};

json read_json_file(const std::string& path) {
  if (!fs::exists(path)) throw DataError("no such file: " + path);
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { io::write_file(p, j.dump(2) + "\n"); }

// Refuses to touch a non-empty directory unless forced; a forced run
// starts from an empty directory.
fs::path prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty (pass --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  return dir;
}

fs::path out_or_default(const std::string& out, const std::string& sub) {
  return out.empty() ? output_root() / sub : fs::path(out);
}

data::Regime regime_of(const std::string& env, const std::string& regime) {
  if (env == "maze") return data::Regime::kMaze;
  if (env != "wall") throw ConfigError("env must be wall or maze, got " + env);
  const data::Regime r = data::parse_regime(regime);
  if (r == data::Regime::kMaze) throw ConfigError("the wall env takes regime ws or wb");
  return r;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string short_hash(const json& j) { return train::config_hash(j).substr(0, 8); }

// Explicit preset, or desk when the images are smaller than the reference 64.
Preset resolve_preset(const std::string& name, std::size_t image_size) {
  if (name != "auto") return parse_preset(name);
  return image_size < 64 ? Preset::kDesk : Preset::kPaper;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return v;
}

std::optional<env::Vec2> parse_point(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto v = parse_values(s);
  if (v.size() != 2) throw UsageError("expected x,y but got '" + s + "'");
  return env::Vec2{v[0], v[1]};
}

// Benchmark spec matching the environment a checkpoint was trained on.
eval::BenchmarkSpec spec_for_model(const json& extra, std::optional<data::Regime> regime,
                                   const std::string& preset_name) {
  data::DatasetConfig dc;
  const bool have_dc = extra.contains("dataset_config") && !extra.at("dataset_config").is_null();
  if (have_dc) dc = extra.at("dataset_config").get<data::DatasetConfig>();
  const data::Regime r = regime ? *regime : (have_dc ? dc.regime : data::Regime::kWS);
  if (have_dc && (r == data::Regime::kMaze) != dc.is_maze())
    throw ConfigError("checkpoint was trained on a " + std::string(dc.is_maze() ? "maze" : "wall") +
                      " dataset");
  const std::size_t image = have_dc ? (dc.is_maze() ? dc.maze.image_size : dc.wall.image_size) : 64;
  eval::BenchmarkSpec spec = benchmark_preset(resolve_preset(preset_name, image), r);
  if (have_dc) {
    spec.wall = dc.wall;
    spec.maze = dc.maze;
  }
  return spec;
}

void setup_logging(const std::string& level) {
  auto logger = std::make_shared<spdlog::logger>("vgjepa", std::make_shared<spdlog::sinks::stderr_sink_st>());
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
  if (spdlog::get_level() == spdlog::level::off && level != "off")
    throw UsageError("unknown log level '" + level + "'");
}

void log_progress(const train::LossEntry& e, std::size_t steps) {
  if ((e.step + 1) % 100 == 0 || e.step + 1 == steps)
    spdlog::info("phase {} step {}/{} loss {:.5f}", e.phase, e.step + 1, steps, e.total);
}

// ---- gen-data

struct GenArgs {
  std::string env = "wall", regime = "ws", preset = "paper", config, out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> trajectories, length, image_size;
};

void cmd_gen_data(const GenArgs& a, const Globals& g, std::ostream& os) {
  const data::Regime r = regime_of(a.env, a.env == "maze" ? "maze" : a.regime);
  json j = dataset_preset(parse_preset(a.preset), r);
  if (!a.config.empty()) j.merge_patch(read_json_file(a.config));
  if (a.trajectories) j["num_trajectories"] = *a.trajectories;
  if (a.length) j["length"] = *a.length;
  if (a.image_size) {
    j["wall"]["image_size"] = *a.image_size;
    j["maze"]["image_size"] = *a.image_size;
  }
  j["regime"] = data::to_string(r);
  const auto cfg = j.get<data::DatasetConfig>();
  const fs::path dir = prepare_out(
      out_or_default(a.out, "data/" + lower(data::to_string(r)) + "_s" + std::to_string(a.seed)), g.force);
  spdlog::info("generating {} trajectories into {}", cfg.num_trajectories, dir.string());
  const json manifest = data::generate_to_disk(cfg, a.seed, dir, g.threads);
  write_json(dir / "effective_config.json",
             json{{"command", "gen-data"}, {"seed", a.seed}, {"dataset", cfg}});
  os << json{{"dataset", dir.string()}, {"dataset_id", train::config_hash(manifest)}}.dump() << "\n";
}

// ---- train

struct TrainArgs {
  std::string data, mode = "VF", preset = "auto", config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> gamma, tau;
  bool untrained = false;
};

train::TrainConfig train_config(const TrainArgs& a, const data::TrajectoryDataset& ds) {
  const data::Regime r = ds.regime();
  json j = train_preset(resolve_preset(a.preset, ds.frame_shape().resolution), r, a.mode);
  if (!a.config.empty()) j.merge_patch(read_json_file(a.config));
  // Flags win over the file; the mode is fixed by the flag.
  j["mode"] = train::find_mode(a.mode).name;
  if (j.contains("model")) j["model"]["head"]["kind"] = model::to_string(train::find_mode(a.mode).head);
  if (a.seed) j["seed"] = *a.seed;
  if (a.steps) j["steps"] = *a.steps;
  if (a.gamma) j["losses"]["gamma"] = *a.gamma;
  if (a.tau) j["losses"]["tau"] = *a.tau;
  return train::TrainConfig::from_json(j, r);
}

void cmd_train(const TrainArgs& a, const Globals& g, std::ostream& os) {
  const data::TrajectoryDataset ds = data::read_dataset(a.data);
  const train::TrainConfig cfg = train_config(a, ds);
  const json eff{{"command", "train"}, {"data", a.data}, {"untrained", a.untrained}, {"train", cfg.to_json()}};
  const fs::path dir = prepare_out(
      out_or_default(a.out, "runs/" + lower(cfg.mode) + "_s" + std::to_string(cfg.seed) + "_" + short_hash(eff)),
      g.force);
  write_json(dir / "effective_config.json", eff);
  if (a.untrained) {
    const auto m = model::WorldModel::initialize(cfg.model, derive_seed(cfg.seed, 1));
    m.save(dir / "model.ckpt", json{{"mode", "untrained"},
                                    {"config_hash", train::config_hash(cfg.to_json())},
                                    {"dataset_id", train::dataset_id(ds)},
                                    {"dataset_config", ds.manifest().value("config", json())}});
  } else {
    train::TrainOptions opts;
    opts.out_dir = dir;
    opts.on_step = [&](const train::LossEntry& e, const ad::ParamSet<float>&) { log_progress(e, cfg.steps); };
    spdlog::info("training {} for {} steps per phase", cfg.mode, cfg.steps);
    const auto result = train::train(cfg, ds, opts);
    train::write_run(result, dir);
  }
  os << json{{"run", dir.string()}, {"model", (dir / "model.ckpt").string()}}.dump() << "\n";
}

// ---- plan

struct PlanArgs {
  std::string model, regime, preset = "auto", config, env_json, start, goal, out;
  std::uint64_t seed = 0;
  std::size_t instance = 0;
};

void cmd_plan(const PlanArgs& a, const Globals& g, std::ostream& os) {
  const plan::LoadedModel lm = plan::LoadedModel::load(a.model);
  std::optional<data::Regime> r;
  if (!a.regime.empty()) r = data::parse_regime(a.regime);
  eval::BenchmarkSpec spec = spec_for_model(lm.extra, r, a.preset);
  if (!a.config.empty()) {
    json p = spec.plan;
    p.merge_patch(read_json_file(a.config));
    spec.plan = p.get<plan::PlanConfig>();
  }
  spec.seed = a.seed;
  spec.instances = a.instance + 1;
  auto inst = eval::make_instances(spec).back();
  if (!a.env_json.empty()) {
    if (a.start.empty() || a.goal.empty()) throw UsageError("--env-json needs --start and --goal");
    inst.env = plan::EnvInstance::from_json(read_json_file(a.env_json));
  }
  if (auto s = parse_point(a.start)) inst.start = {s->x, s->y, 0, 0};
  if (auto q = parse_point(a.goal)) inst.goal = {q->x, q->y, 0, 0};
  // --out naming a .json file writes the result there, with the effective
  // config beside it; otherwise --out is a directory.
  fs::path result_path, config_path;
  if (fs::path(a.out).extension() == ".json") {
    result_path = a.out;
    config_path = result_path.parent_path() / (result_path.stem().string() + ".effective_config.json");
    if (!g.force && (fs::exists(result_path) || fs::exists(config_path)))
      throw UsageError(result_path.string() + " exists (pass --force to replace it)");
  } else {
    const fs::path dir =
        prepare_out(out_or_default(a.out, "plans/instance_" + std::to_string(a.instance)), g.force);
    result_path = dir / "plan_result.json";
    config_path = dir / "effective_config.json";
  }
  write_json(config_path,
             json{{"command", "plan"}, {"model", a.model}, {"instance", a.instance}, {"benchmark", spec},
                  {"env", inst.env.to_json()}, {"start", {inst.start.x, inst.start.y}},
                  {"goal", {inst.goal.x, inst.goal.y}}});
  const auto res = plan::mpc_plan(inst.env, lm.latent(), inst.start, inst.goal, spec.plan, inst.plan_seed);
  write_json(result_path, json{{"instance", a.instance}, {"env", inst.env.to_json()}, {"result", res.to_json()}});
  os << json{{"success", res.success},
             {"steps_to_goal", res.steps_to_goal ? json(*res.steps_to_goal) : json(nullptr)},
             {"min_goal_distance", res.min_goal_distance()}}
            .dump()
     << "\n";
}

// ---- eval

struct EvalArgs {
  std::string model, env, regime, preset = "auto", config, out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> instances;
};

void cmd_eval(const EvalArgs& a, const Globals& g, std::ostream& os) {
  const plan::LoadedModel lm = plan::LoadedModel::load(a.model);
  std::optional<data::Regime> r;
  if (!a.env.empty()) r = regime_of(a.env, a.regime.empty() ? "ws" : a.regime);
  else if (!a.regime.empty()) r = data::parse_regime(a.regime);
  eval::BenchmarkSpec spec = spec_for_model(lm.extra, r, a.preset);
  if (!a.config.empty()) {
    json j = spec;
    j.merge_patch(read_json_file(a.config));
    spec = j.get<eval::BenchmarkSpec>();
  }
  spec.seed = a.seed;
  if (a.instances) spec.instances = *a.instances;
  spec.model = a.model;
  const fs::path dir = prepare_out(out_or_default(a.out, "eval/" + short_hash(json(spec))), g.force);
  write_json(dir / "effective_config.json", json{{"command", "eval"}, {"benchmark", spec}});
  spdlog::info("planning {} instances with {} threads", spec.instance_count(), g.threads);
  const auto res = eval::run_benchmark(spec, lm.latent(), g.threads);
  eval::write_benchmark(res, dir);
  os << json{{"success_rate", res.success_rate}, {"successes", res.successes()}, {"instances", res.results.size()}}.dump()
     << "\n";
}

// ---- sweep

struct SweepArgs {
  std::string param, values, mode = "VF", data, preset = "auto", config, out;
  std::uint64_t seed = 0, bench_seed = 0;
  std::optional<std::size_t> steps, instances;
};

void cmd_sweep(const SweepArgs& a, const Globals& g, std::ostream& os) {
  const auto param = eval::parse_sweep_param(a.param);
  const auto values = parse_values(a.values);
  const data::TrajectoryDataset ds = data::read_dataset(a.data);
  TrainArgs ta;
  ta.mode = a.mode;
  ta.preset = a.preset;
  ta.config = a.config;
  ta.seed = a.seed;
  ta.steps = a.steps;
  const train::TrainConfig base = train_config(ta, ds);
  const Preset preset = resolve_preset(a.preset, ds.frame_shape().resolution);
  eval::BenchmarkSpec bench = benchmark_preset(preset, ds.regime());
  const auto dc = ds.manifest().at("config").get<data::DatasetConfig>();
  bench.wall = dc.wall;
  bench.maze = dc.maze;
  bench.seed = a.bench_seed;
  if (a.instances) bench.instances = *a.instances;
  const json eff{{"command", "sweep"}, {"param", eval::to_string(param)}, {"values", values},
                 {"data", a.data}, {"train", base.to_json()}, {"benchmark", bench}};
  const fs::path dir = prepare_out(out_or_default(a.out, "sweeps/" + eval::to_string(param) + "_" + short_hash(eff)), g.force);
  write_json(dir / "effective_config.json", eff);
  const auto table = eval::sweep(param, values, base, ds, bench, dir, g.threads);
  os << table.csv();
}

// ---- inspect

struct InspectArgs {
  std::string model, data;
};

json param_summary(const model::WorldModel& m) {
  return json{{"encoder", m.encoder_params()},
              {"predictor", m.predictor_params()},
              {"head", m.head_params()},
              {"total", m.params().scalar_count("")}};
}

void cmd_inspect(const InspectArgs& a, std::ostream& os) {
  if (a.model.empty() == a.data.empty()) throw UsageError("inspect takes exactly one of --model or --data");
  if (!a.model.empty()) {
    const auto lm = plan::LoadedModel::load(a.model);
    json j{{"model", a.model}, {"mode", lm.extra.value("mode", "")}, {"parameters", param_summary(lm.level1)},
           {"config", lm.level1.config()}};
    if (lm.level2) j["level2_parameters"] = param_summary(*lm.level2);
    os << j.dump(2) << "\n";
    return;
  }
  const json m = read_json_file((fs::path(a.data) / "manifest.json").string());
  json j{{"data", a.data}, {"dataset_id", train::config_hash(m)}};
  for (const char* k : {"env", "regime", "seed", "frame", "counts", "stats"})
    if (m.contains(k)) j[k] = m.at(k);
  os << j.dump(2) << "\n";
}

// ---- reproduce-table2

struct TableArgs {
  std::string preset = "desk", envs = "ws,wb,maze", modes, out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> steps, instances;
  bool acknowledge = false;
};

void cmd_reproduce_table2(const TableArgs& a, const Globals& g, std::ostream& os) {
  if (!a.acknowledge)
    throw UsageError("reproduce-table2 trains every mode on every environment; pass --acknowledge-compute");
  const Preset preset = parse_preset(a.preset);
  std::vector<data::Regime> regimes;
  {
    std::stringstream ss(a.envs);
    std::string e;
    while (std::getline(ss, e, ',')) regimes.push_back(data::parse_regime(e));
  }
  std::vector<std::string> modes;
  if (a.modes.empty()) {
    // The ten table rows; Dual is available through --modes.
    for (const auto& m : train::mode_registry())
      if (!m.dual) modes.push_back(m.name);
  } else {
    std::stringstream ss(a.modes);
    std::string m;
    while (std::getline(ss, m, ',')) modes.push_back(train::find_mode(m).name);
  }
  const json plan_json{{"command", "reproduce-table2"}, {"preset", to_string(preset)}, {"seed", a.seed},
                       {"steps", a.steps ? json(*a.steps) : json(nullptr)},
                       {"instances", a.instances ? json(*a.instances) : json(nullptr)}};
  const fs::path dir = out_or_default(a.out, "table2_" + to_string(preset) + "_s" + std::to_string(a.seed));
  // Re-invocation with the same settings resumes; anything else needs --force.
  const fs::path state = dir / "effective_config.json";
  if (fs::exists(state) && read_json_file(state.string()) == plan_json) {
    spdlog::info("resuming {}", dir.string());
  } else {
    prepare_out(dir, g.force);
    write_json(state, plan_json);
  }

  std::map<std::pair<std::string, std::string>, double> rates;
  for (const data::Regime r : regimes) {
    const std::string env_name = lower(data::to_string(r));
    const fs::path data_dir = dir / "data" / env_name;
    if (!fs::exists(data_dir / "manifest.json")) {
      fs::remove_all(data_dir);
      spdlog::info("generating the {} dataset", env_name);
      data::generate_to_disk(dataset_preset(preset, r), a.seed, data_dir, g.threads);
    }
    const data::TrajectoryDataset ds = data::read_dataset(data_dir);
    eval::BenchmarkSpec bench = benchmark_preset(preset, r);
    bench.seed = a.seed;
    if (a.instances) bench.instances = *a.instances;
    for (const auto& mode : modes) {
      const fs::path cell = dir / env_name / lower(mode);
      if (fs::exists(cell / "cell.json")) {
        rates[{mode, env_name}] = read_json_file((cell / "cell.json").string()).at("success_rate").get<double>();
        spdlog::info("{} on {}: done ({})", mode, env_name, rates[{mode, env_name}]);
        continue;
      }
      fs::remove_all(cell);
      json tj = train_preset(preset, r, mode);
      tj["seed"] = a.seed;
      if (a.steps) tj["steps"] = *a.steps;
      const auto cfg = train::TrainConfig::from_json(tj, r);
      train::TrainOptions opts;
      opts.out_dir = cell;
      opts.on_step = [&](const train::LossEntry& e, const ad::ParamSet<float>&) { log_progress(e, cfg.steps); };
      spdlog::info("{} on {}: training", mode, env_name);
      const auto run = train::train(cfg, ds, opts);
      train::write_run(run, cell);
      bench.model = mode;
      const auto lm = plan::LoadedModel::load(cell / "model.ckpt");
      const auto res = eval::run_benchmark(bench, lm.latent(), g.threads);
      eval::write_benchmark(res, cell / "benchmark");
      write_json(cell / "cell.json", json{{"mode", mode}, {"env", env_name}, {"success_rate", res.success_rate}});
      rates[{mode, env_name}] = res.success_rate;
      spdlog::info("{} on {}: {}", mode, env_name, res.success_rate);
    }
  }
  std::ostringstream csv;
  csv << "mode,WS,WB,Maze\n";
  for (const auto& mode : modes) {
    csv << mode;
    for (const char* e : {"ws", "wb", "maze"}) {
      csv << ",";
      if (auto it = rates.find({mode, e}); it != rates.end()) csv << it->second;
    }
    csv << "\n";
  }
  io::write_file(dir / "table2.csv", csv.str());
  os << csv.str();
}

void emit_error(const char* kind, int code, const std::string& msg) {
  std::cerr << json{{"error", kind}, {"exit_code", code}, {"message", msg}}.dump() << "\n";
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "error";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& os) {
  CLI::App app{"Value-guided latent world models: data, training, planning and evaluation", "vgjepa"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads for generation and benchmarks")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "off|error|warn|info|debug");
  app.add_flag("--force", g.force, "Replace an existing output directory");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-data", "Generate a trajectory dataset");
  gen->add_option("--env", ga.env, "wall|maze")->check(CLI::IsMember({"wall", "maze"}));
  gen->add_option("--regime", ga.regime, "ws|wb (wall only)");
  gen->add_option("--preset", ga.preset, "paper|desk");
  gen->add_option("--seed", ga.seed);
  gen->add_option("--trajectories", ga.trajectories);
  gen->add_option("--length", ga.length, "Observations per trajectory");
  gen->add_option("--image-size", ga.image_size);
  gen->add_option("--config", ga.config, "Dataset config JSON (patched over the preset)");
  gen->add_option("--out", ga.out);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a world model");
  tr->add_option("--data", ta.data)->required();
  tr->add_option("--mode", ta.mode, "Training mode (case-insensitive)");
  tr->add_option("--preset", ta.preset, "auto|paper|desk");
  tr->add_option("--seed", ta.seed);
  tr->add_option("--steps", ta.steps, "Optimizer steps per phase");
  tr->add_option("--gamma", ta.gamma);
  tr->add_option("--tau", ta.tau);
  tr->add_option("--config", ta.config, "Training config JSON (patched over the preset)");
  tr->add_flag("--untrained", ta.untrained, "Write the random initialization instead of training");
  tr->add_option("--out", ta.out);

  PlanArgs pa;
  auto* pl = app.add_subcommand("plan", "Plan one benchmark instance with MPC");
  pl->add_option("--model", pa.model)->required();
  pl->add_option("--regime", pa.regime, "ws|wb|maze (default: the training regime)");
  pl->add_option("--instance", pa.instance, "Benchmark instance index");
  pl->add_option("--seed", pa.seed, "Benchmark seed");
  pl->add_option("--preset", pa.preset, "auto|paper|desk");
  pl->add_option("--config", pa.config, "Planner config JSON");
  pl->add_option("--env-json", pa.env_json, "Environment instance JSON (as in plan_result.json)");
  pl->add_option("--start", pa.start, "x,y override");
  pl->add_option("--goal", pa.goal, "x,y override");
  pl->add_option("--out", pa.out, "Directory, or a .json file for the result");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Success rate over benchmark instances");
  ev->add_option("--model", ea.model)->required();
  ev->add_option("--env", ea.env, "wall|maze");
  ev->add_option("--regime", ea.regime, "ws|wb");
  ev->add_option("--instances", ea.instances);
  ev->add_option("--seed", ea.seed);
  ev->add_option("--preset", ea.preset, "auto|paper|desk");
  ev->add_option("--config", ea.config, "Benchmark spec JSON");
  ev->add_option("--out", ea.out);

  SweepArgs sa;
  auto* sw = app.add_subcommand("sweep", "Train and benchmark over a gamma or tau grid");
  sw->add_option("--param", sa.param, "gamma|tau")->required();
  sw->add_option("--values", sa.values, "Comma-separated values in (0, 1)")->required();
  sw->add_option("--mode", sa.mode, "vf|vf_quasi");
  sw->add_option("--data", sa.data)->required();
  sw->add_option("--steps", sa.steps);
  sw->add_option("--seed", sa.seed);
  sw->add_option("--bench-seed", sa.bench_seed);
  sw->add_option("--instances", sa.instances);
  sw->add_option("--preset", sa.preset, "auto|paper|desk");
  sw->add_option("--config", sa.config, "Training config JSON");
  sw->add_option("--out", sa.out);

  InspectArgs ia;
  auto* in = app.add_subcommand("inspect", "Summarize a checkpoint or dataset");
  in->add_option("--model", ia.model);
  in->add_option("--data", ia.data);

  TableArgs ra;
  auto* rt = app.add_subcommand("reproduce-table2", "Every mode on every environment, success-rate table");
  rt->add_option("--preset", ra.preset, "desk|paper");
  rt->add_option("--envs", ra.envs, "Comma-separated subset of ws,wb,maze");
  rt->add_option("--modes", ra.modes, "Comma-separated modes (default: the ten table rows, without Dual)");
  rt->add_option("--seed", ra.seed);
  rt->add_option("--steps", ra.steps);
  rt->add_option("--instances", ra.instances);
  rt->add_flag("--acknowledge-compute", ra.acknowledge, "Confirm the long-running job");
  rt->add_option("--out", ra.out);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    os << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    os << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    emit_error("usage", static_cast<int>(ErrorKind::kUsage), e.what());
    std::cerr << sub->help();
    return static_cast<int>(ErrorKind::kUsage);
  }

  try {
    setup_logging(g.log_level);
    if (*gen) cmd_gen_data(ga, g, os);
    else if (*tr) cmd_train(ta, g, os);
    else if (*pl) cmd_plan(pa, g, os);
    else if (*ev) cmd_eval(ea, g, os);
    else if (*sw) cmd_sweep(sa, g, os);
    else if (*in) cmd_inspect(ia, os);
    else if (*rt) cmd_reproduce_table2(ra, g, os);
    return 0;
  } catch (const Error& e) {
    emit_error(kind_name(e.kind()), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const json::exception& e) {
    emit_error("config", static_cast<int>(ErrorKind::kConfig), e.what());
    return static_cast<int>(ErrorKind::kConfig);
  } catch (const fs::filesystem_error& e) {
    emit_error("data", static_cast<int>(ErrorKind::kData), e.what());
    return static_cast<int>(ErrorKind::kData);
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout);
}

}  // namespace vgjepa::cli
