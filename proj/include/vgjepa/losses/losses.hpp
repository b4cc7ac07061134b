// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "vgjepa/dataset/batch.hpp"
#include "vgjepa/model/model.hpp"

namespace vgjepa::losses {

enum class VcregAxes { kBatch, kBatchTime };

struct LossConfig {
  double tau = 0.80;
  double gamma = 0.98;
  double var_weight = 25.0;
  double cov_weight = 1.0;
  double var_eps = 1e-4;
  VcregAxes vcreg_axes = VcregAxes::kBatch;
  double margin_pos = 0.0;
  double margin_neg = 1.0;
  // Mixing weights of the summed objective in joint modes.
  double vf_weight = 1.0;
  double pred_weight = 1.0;
  double vcreg_weight = 1.0;

  void validate() const;
  // (gamma, tau) defaults for value-function training by head kind.
  static LossConfig for_head(model::HeadKind kind);
};
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

// |tau - 1[x < 0]| * x^2
double expectile_penalty(double x, double tau);

// Pairing of every segment transition (s_t, s_{t+1}) with every goal.
struct VfPairs {
  std::vector<std::size_t> state_rows;  // rows of the segment latents
  std::vector<std::size_t> next_rows;
  std::vector<std::size_t> goal_rows;   // rows of the goal latents
  std::vector<double> cost;             // 1[s_t != g], by state identity
  std::size_t size() const { return state_rows.size(); }
};
VfPairs make_vf_pairs(const data::Batch& batch);

// -cost + gamma * sg(v_next) - v, elementwise over pairs.
template <class T>
ad::Var<T> bellman_residuals(ad::Var<T> v, ad::Var<T> v_next,
                             const std::vector<double>& cost, double gamma);

// Bellman residuals -cost + gamma * sg(V(s', g)) - V(s, g), one per pair.
// z: segment latents [B*L, D]; zg: goal latents [G, D].
template <class T>
ad::Var<T> vf_residuals(const model::ModelConfig& mcfg, ad::Binder<T>& b, ad::Var<T> z,
                        ad::Var<T> zg, const VfPairs& pairs, double gamma);
// Residuals with an explicit target branch: V(s', g) is evaluated on
// z_target / zg_target through target_binder, then cut from the graph.
template <class T>
ad::Var<T> vf_residuals(const model::ModelConfig& mcfg, ad::Binder<T>& b, ad::Var<T> z,
                        ad::Var<T> zg, ad::Binder<T>& target_binder, ad::Var<T> z_target,
                        ad::Var<T> zg_target, const VfPairs& pairs, double gamma);
template <class T>
ad::Var<T> vf_loss(const model::ModelConfig& mcfg, ad::Binder<T>& b, ad::Var<T> z,
                   ad::Var<T> zg, ad::Binder<T>& target_binder, ad::Var<T> z_target,
                   ad::Var<T> zg_target, const VfPairs& pairs, const LossConfig& cfg);
// Mean expectile penalty of the residuals.
template <class T>
ad::Var<T> vf_loss(const model::ModelConfig& mcfg, ad::Binder<T>& b, ad::Var<T> z,
                   ad::Var<T> zg, const VfPairs& pairs, const LossConfig& cfg);

// Open-loop rollout from the first latent of each segment. z and targets are
// [B*L, D] in segment-major order; actions [B*(L-1), A].
template <class T>
ad::Var<T> pred_loss(const model::ModelConfig& mcfg, ad::Binder<T>& b, ad::Var<T> z,
                     ad::Var<T> actions, ad::Var<T> targets, std::size_t segments,
                     std::size_t length);

// VCReg over the rows of z [N, D].
template <class T>
ad::Var<T> vcreg_loss(ad::Var<T> z, const LossConfig& cfg);
// VCReg on segment latents: per time step across segments (kBatch) or
// across all rows (kBatchTime). kBatch averages the per-step losses.
template <class T>
ad::Var<T> vcreg_segments(ad::Var<T> z, std::size_t segments, std::size_t length,
                          const LossConfig& cfg);

using RowPairs = std::vector<std::pair<std::size_t, std::size_t>>;
RowPairs successive_pairs(std::size_t segments, std::size_t length);
// Random pairs of distinct rows drawn from the batch.
RowPairs random_pairs(std::size_t rows, std::size_t count, Rng& rng);

// Squared hinges on latent distances: positives pulled within margin_pos,
// negatives pushed beyond margin_neg. Each term is averaged over its pairs.
template <class T>
ad::Var<T> contrastive_loss(ad::Var<T> z, const RowPairs& positives,
                            const RowPairs& negatives, const LossConfig& cfg);

// Mean over successive pairs of (||z_{t+1} - z_t|| - 1)^2.
template <class T>
ad::Var<T> regressive_loss(ad::Var<T> z, const RowPairs& successive);

}  // namespace vgjepa::losses
