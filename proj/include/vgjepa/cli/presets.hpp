// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vgjepa/eval/benchmark.hpp"

namespace vgjepa::cli {

// "paper" is the reference scale; "desk" shrinks data, images, networks and
// the planning budget so a full run fits on one CPU core.
enum class Preset { kPaper, kDesk };

Preset parse_preset(const std::string& s);
std::string to_string(Preset p);

data::DatasetConfig dataset_preset(Preset p, data::Regime r);
model::ModelConfig model_preset(Preset p, data::Regime r, model::HeadKind head);
// Training config as a JSON patch over the TrainConfig defaults.
nlohmann::json train_preset(Preset p, data::Regime r, const std::string& mode);
plan::PlanConfig plan_preset(Preset p, data::Regime r);
eval::BenchmarkSpec benchmark_preset(Preset p, data::Regime r);

}  // namespace vgjepa::cli
