// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/cli/presets.hpp"

#include "vgjepa/common/error.hpp"

namespace vgjepa::cli {

using nlohmann::json;

Preset parse_preset(const std::string& s) {
  if (s == "paper") return Preset::kPaper;
  if (s == "desk") return Preset::kDesk;
  throw ConfigError("preset must be paper or desk, got " + s);
}

std::string to_string(Preset p) { return p == Preset::kPaper ? "paper" : "desk"; }

data::DatasetConfig dataset_preset(Preset p, data::Regime r) {
  data::DatasetConfig c = data::DatasetConfig::defaults(r);
  if (p == Preset::kDesk) {
    c.num_trajectories = 300;
    c.wall.image_size = 32;
    c.maze.image_size = 32;
  }
  return c;
}

model::ModelConfig model_preset(Preset p, data::Regime r, model::HeadKind head) {
  const bool maze = r == data::Regime::kMaze;
  model::ModelConfig m;
  if (p == Preset::kPaper) {
    m = maze ? model::ModelConfig::reference_maze() : model::ModelConfig::reference_wall();
  } else {
    m = model::ModelConfig::desk_wall();
    if (maze) {
      m.encoder.in_channels = env::MazeWorld::kChannels;
      m.encoder.proprio_dim = 2;
      m.encoder.proprio_hidden = 16;
    }
  }
  m.head.kind = head;
  return m;
}

json train_preset(Preset p, data::Regime r, const std::string& mode) {
  const auto& m = train::find_mode(mode);
  return json{{"mode", m.name}, {"model", model_preset(p, r, m.head)}};
}

plan::PlanConfig plan_preset(Preset p, data::Regime r) {
  plan::PlanConfig c = plan::PlanConfig::defaults(r);
  if (p == Preset::kDesk) {
    c.num_samples = 200;
    if (r == data::Regime::kMaze) {
      c.horizon = 32;
      c.total_steps = 100;
    } else {
      c.horizon = 32;
      c.total_steps = r == data::Regime::kWB ? 48 : 100;
    }
  }
  return c;
}

eval::BenchmarkSpec benchmark_preset(Preset p, data::Regime r) {
  eval::BenchmarkSpec s = eval::BenchmarkSpec::defaults(r);
  const auto d = dataset_preset(p, r);
  s.wall = d.wall;
  s.maze = d.maze;
  s.plan = plan_preset(p, r);
  if (p == Preset::kDesk) s.instances = 50;
  return s;
}

}  // namespace vgjepa::cli
