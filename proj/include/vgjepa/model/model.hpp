// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "vgjepa/autodiff/ops.hpp"
#include "vgjepa/autodiff/params.hpp"

namespace vgjepa::model {

enum class HeadKind { kEuclidean, kIQE };
std::string to_string(HeadKind k);
HeadKind parse_head_kind(const std::string& s);

struct EncoderConfig {
  // "image": conv stack over [N, C, H, W]. "latent": MLP over [N, in_channels],
  // used by the second level of the dual model.
  std::string input = "image";
  std::size_t in_channels = 2;
  std::size_t resolution = 64;
  // One stride-2 conv per stage, followed by residual blocks at that width.
  std::vector<std::size_t> widths = {32, 64, 128, 256};
  std::vector<std::size_t> residual_blocks = {1, 1, 1, 1};
  std::string pool = "mean";  // "mean" (global average) or "flatten"
  std::size_t hidden = 0;     // optional fc layer before the output projection
  std::size_t latent_dim = 512;
  std::size_t proprio_dim = 0;
  std::size_t proprio_hidden = 64;
};

struct PredictorConfig {
  std::size_t action_dim = 2;
  std::vector<std::size_t> hidden = {740, 740};
  // Predict z + f(z, a) instead of f(z, a).
  bool residual = true;
};

struct HeadConfig {
  HeadKind kind = HeadKind::kEuclidean;
  std::size_t components = 16;     // k
  std::size_t component_dim = 32;  // m
  double alpha_init = 0.0;         // mixing logit
};

struct ModelConfig {
  EncoderConfig encoder;
  PredictorConfig predictor;
  HeadConfig head;
  bool with_predictor = true;

  std::size_t latent_dim() const { return encoder.latent_dim; }
  void validate() const;

  static ModelConfig reference_wall();
  static ModelConfig reference_maze();
  // Reduced encoder for 32x32 wall observations.
  static ModelConfig desk_wall();
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);
void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Parameters named "enc.*", "pred.*" and "head.*".
template <class T>
ad::ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// images [N, C, H, W], proprio [N, P] when the config has proprio.
template <class T>
ad::Var<T> encode(const ModelConfig& cfg, ad::Binder<T>& b, ad::Var<T> images,
                  std::optional<ad::Var<T>> proprio = std::nullopt);

// z [N, D], a [N, action_dim] -> [N, D].
template <class T>
ad::Var<T> predict(const ModelConfig& cfg, ad::Binder<T>& b, ad::Var<T> z,
                   ad::Var<T> a);

// Head distance d(zs -> zg), shape [N]. V = -d.
template <class T>
ad::Var<T> distance(const ModelConfig& cfg, ad::Binder<T>& b, ad::Var<T> zs,
                    ad::Var<T> zg);

template <class T>
ad::Var<T> value(const ModelConfig& cfg, ad::Binder<T>& b, ad::Var<T> zs,
                 ad::Var<T> zg) {
  return ad::scale(distance(cfg, b, zs, zg), T{-1});
}

// Interval quasimetric for a batch of latent rows, with explicit mixing
// weight w = sigmoid(alpha): w * max_j d_j + (1 - w) * mean_j d_j.
template <class T>
ad::Var<T> iqe_distance(ad::Var<T> u, ad::Var<T> v, ad::Var<T> alpha,
                        std::size_t components, std::size_t component_dim);

// Shadow copy of a parameter subset. Only the pred_EMA baseline uses it.
struct TargetParams {
  std::vector<std::size_t> indices;
  std::vector<ad::Tensor<float>> values;
};
TargetParams make_target(const ad::ParamSet<float>& source,
                         const std::vector<std::string>& prefixes);
// target <- rho * target + (1 - rho) * source, elementwise.
void ema_update(TargetParams& target, const ad::ParamSet<float>& source, double rho);
// Copy of `source` with the target values substituted.
ad::ParamSet<float> apply_target(const ad::ParamSet<float>& source,
                                 const TargetParams& target);

inline const std::vector<std::string> kEncoderPrefix = {"enc."};
inline const std::vector<std::string> kPredictorPrefix = {"pred."};
inline const std::vector<std::string> kHeadPrefix = {"head."};

// Trained (or freshly initialized) model with float parameters.
class WorldModel {
 public:
  WorldModel(ModelConfig cfg, ad::ParamSet<float> params);
  static WorldModel initialize(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ad::ParamSet<float>& params() noexcept { return params_; }
  const ad::ParamSet<float>& params() const noexcept { return params_; }

  std::size_t encoder_params() const { return params_.scalar_count("enc."); }
  std::size_t predictor_params() const { return params_.scalar_count("pred."); }
  std::size_t head_params() const { return params_.scalar_count("head."); }

  // Inference without gradients. proprio may be empty when unused.
  ad::Tensor<float> encode(const ad::Tensor<float>& images,
                           const ad::Tensor<float>& proprio = {}) const;
  ad::Tensor<float> predict(const ad::Tensor<float>& z,
                            const ad::Tensor<float>& a) const;
  ad::Tensor<float> distance(const ad::Tensor<float>& zs,
                             const ad::Tensor<float>& zg) const;

  void save(const std::filesystem::path& path, nlohmann::json extra = {}) const;
  static WorldModel load(const std::filesystem::path& path,
                         nlohmann::json* extra = nullptr);

 private:
  ModelConfig cfg_;
  ad::ParamSet<float> params_;
};

// Encodes images in chunks to bound tape memory.
ad::Tensor<float> encode_batched(const WorldModel& m, const ad::Tensor<float>& images,
                                 const ad::Tensor<float>& proprio,
                                 std::size_t chunk = 256);

}  // namespace vgjepa::model
