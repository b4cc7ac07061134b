// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vgjepa/dataset/dataset.hpp"
#include "vgjepa/losses/losses.hpp"
#include "vgjepa/model/model.hpp"

namespace vgjepa::train {

// One row of the training-approach table, or the dual variant.
struct TrainMode {
  std::string name;
  bool sep = false;
  model::HeadKind head = model::HeadKind::kEuclidean;
  bool vf = false;
  bool vcreg = false;
  bool contrastive = false;
  bool regressive = false;
  bool ema = false;
  bool dual = false;

  // Losses applied to the encoder (phase 1 in Sep modes).
  std::vector<std::string> encoder_losses() const;
  bool joint_pred() const { return !sep && !dual; }
};

const std::vector<TrainMode>& mode_registry();
// Case-insensitive lookup; throws ConfigError on unknown names.
const TrainMode& find_mode(const std::string& name);

struct TrainConfig {
  std::string mode = "VF";
  std::uint64_t seed = 0;
  // Optimizer steps; Sep modes run this many in each phase.
  std::size_t steps = 2000;
  std::size_t batch_segments = 8;
  // Sep phase 2 trains on cached latents, so it affords larger batches.
  std::size_t predictor_batch_segments = 32;
  std::size_t segment_length = data::kSegmentLength;
  double base_lr = 0.0028;
  double warmup_fraction = 0.01;
  double ema_rho = 0.996;
  // Random negative pairs per batch for the contrastive loss; 0 means one per
  // positive pair.
  std::size_t contrastive_negatives = 0;
  // Dual second level: hidden width of the latent-to-latent encoder.
  std::size_t dual_hidden = 256;
  losses::LossConfig losses;
  model::ModelConfig model;

  nlohmann::json to_json() const;
  // Fills every missing key with its default. The mode picks the head kind
  // and (gamma, tau); the regime picks the model preset and VCReg axes.
  static TrainConfig from_json(const nlohmann::json& j, data::Regime regime);
  void validate() const;
};

// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::json& j);
std::string dataset_id(const data::TrajectoryDataset& ds);

struct LossEntry {
  int phase = 0;  // 0 joint, 1 encoder, 2 predictor, 3 dual second level
  std::size_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  std::map<std::string, double> parts;
};

struct RunRecord {
  std::string mode;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  std::string config_hash;
  nlohmann::json config;
  // Generation config of the training dataset (environment geometry).
  nlohmann::json dataset_config;
  std::vector<LossEntry> history;
  std::vector<std::string> checkpoints;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  // phase,step,lr,total followed by one column per loss part.
  std::string loss_csv() const;
};

struct TrainOptions {
  // Checkpoints, NaN snapshots and the run record go here when set.
  std::filesystem::path out_dir;
  // Called after each optimizer step with the updated parameters.
  std::function<void(const LossEntry&, const ad::ParamSet<float>&)> on_step;
};

struct TrainResult {
  model::WorldModel model;
  RunRecord record;
  // Second level of the dual variant: latent encoder without predictor.
  std::optional<model::WorldModel> level2;
};

// Serialized encoder parameters (enc.*) with no optimizer state.
std::string encoder_bytes(const ad::ParamSet<float>& params);

// Latents of every dataset state, row traj * length + t.
ad::Tensor<float> encode_dataset(const model::WorldModel& m,
                                 const data::TrajectoryDataset& ds);

TrainResult train(const TrainConfig& cfg, const data::TrajectoryDataset& ds,
                  const TrainOptions& opts = {});

// pred_VCReg world model for predictions plus a VF-trained latent encoder for
// the planning cost.
TrainResult train_dual(const TrainConfig& cfg, const data::TrajectoryDataset& ds,
                       const TrainOptions& opts = {});

// Writes model.ckpt (plus level2.ckpt for the dual variant), run_record.json
// and losses.csv into dir.
void write_run(const TrainResult& r, const std::filesystem::path& dir);

}  // namespace vgjepa::train
