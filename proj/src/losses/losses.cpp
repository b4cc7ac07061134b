// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/losses/losses.hpp"

#include <cmath>

namespace vgjepa::losses {

using ad::Shape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

void LossConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (var_weight < 0 || cov_weight < 0) throw ConfigError("VCReg weights must be >= 0");
  if (var_eps <= 0) throw ConfigError("var_eps must be > 0");
  if (margin_pos < 0 || margin_neg < margin_pos)
    throw ConfigError("contrastive margins need 0 <= margin_pos <= margin_neg");
}

LossConfig LossConfig::for_head(model::HeadKind kind) {
  LossConfig c;
  if (kind == model::HeadKind::kIQE) {
    c.gamma = 0.93;
    c.tau = 0.60;
  }
  return c;
}

void to_json(json& j, const LossConfig& c) {
  j = json{{"tau", c.tau},
           {"gamma", c.gamma},
           {"var_weight", c.var_weight},
           {"cov_weight", c.cov_weight},
           {"var_eps", c.var_eps},
           {"vcreg_axes", c.vcreg_axes == VcregAxes::kBatch ? "batch" : "batch_time"},
           {"margin_pos", c.margin_pos},
           {"margin_neg", c.margin_neg},
           {"vf_weight", c.vf_weight},
           {"pred_weight", c.pred_weight},
           {"vcreg_weight", c.vcreg_weight}};
}

void from_json(const json& j, LossConfig& c) {
  LossConfig d = c;
  d.tau = j.value("tau", d.tau);
  d.gamma = j.value("gamma", d.gamma);
  d.var_weight = j.value("var_weight", d.var_weight);
  d.cov_weight = j.value("cov_weight", d.cov_weight);
  d.var_eps = j.value("var_eps", d.var_eps);
  if (j.contains("vcreg_axes")) {
    const std::string axes = j.at("vcreg_axes").get<std::string>();
    if (axes == "batch") d.vcreg_axes = VcregAxes::kBatch;
    else if (axes == "batch_time") d.vcreg_axes = VcregAxes::kBatchTime;
    else throw ConfigError("vcreg_axes must be 'batch' or 'batch_time'");
  }
  d.margin_pos = j.value("margin_pos", d.margin_pos);
  d.margin_neg = j.value("margin_neg", d.margin_neg);
  d.vf_weight = j.value("vf_weight", d.vf_weight);
  d.pred_weight = j.value("pred_weight", d.pred_weight);
  d.vcreg_weight = j.value("vcreg_weight", d.vcreg_weight);
  d.validate();
  c = d;
}

double expectile_penalty(double x, double tau) {
  const double w = x < 0.0 ? 1.0 - tau : tau;
  return std::abs(w) * x * x;
}

VfPairs make_vf_pairs(const data::Batch& batch) {
  VfPairs p;
  const std::size_t L = batch.length;
  if (L < 2) throw DataError("value loss needs segments of length >= 2");
  if (batch.goal_candidates.empty()) throw DataError("value loss needs at least one goal");
  const std::size_t n = batch.segments.size() * (L - 1) * batch.goal_candidates.size();
  p.state_rows.reserve(n);
  p.next_rows.reserve(n);
  p.goal_rows.reserve(n);
  p.cost.reserve(n);
  for (std::size_t s = 0; s < batch.segments.size(); ++s) {
    for (std::size_t t = 0; t + 1 < L; ++t) {
      const data::StateRef state = batch.segments[s].state(t);
      for (std::size_t g = 0; g < batch.goal_candidates.size(); ++g) {
        p.state_rows.push_back(s * L + t);
        p.next_rows.push_back(s * L + t + 1);
        p.goal_rows.push_back(g);
        p.cost.push_back(batch.goal_candidates[g] == state ? 0.0 : 1.0);
      }
    }
  }
  return p;
}

template <class T>
Var<T> bellman_residuals(Var<T> v, Var<T> v_next, const std::vector<double>& cost,
                         double gamma) {
  if (v.shape() != v_next.shape() || v.size() != cost.size())
    throw DataError("Bellman residuals: mismatched value and cost shapes");
  Tensor<T> c(v.shape());
  for (std::size_t i = 0; i < cost.size(); ++i) c[i] = static_cast<T>(cost[i]);
  Var<T> target = ad::sub(ad::scale(ad::stop_gradient(v_next), static_cast<T>(gamma)),
                          v.tape->constant(std::move(c)));
  return ad::sub(target, v);
}

template <class T>
Var<T> vf_residuals(const model::ModelConfig& mcfg, ad::Binder<T>& b, Var<T> z, Var<T> zg,
                    ad::Binder<T>& target_binder, Var<T> z_target, Var<T> zg_target,
                    const VfPairs& pairs, double gamma) {
  if (pairs.size() == 0) throw DataError("value loss needs at least one goal");
  Var<T> v = model::value(mcfg, b, ad::gather_rows(z, pairs.state_rows),
                          ad::gather_rows(zg, pairs.goal_rows));
  Var<T> v_next = model::value(mcfg, target_binder, ad::gather_rows(z_target, pairs.next_rows),
                               ad::gather_rows(zg_target, pairs.goal_rows));
  return bellman_residuals(v, v_next, pairs.cost, gamma);
}

template <class T>
Var<T> vf_residuals(const model::ModelConfig& mcfg, ad::Binder<T>& b, Var<T> z, Var<T> zg,
                    const VfPairs& pairs, double gamma) {
  return vf_residuals(mcfg, b, z, zg, b, ad::stop_gradient(z), ad::stop_gradient(zg), pairs,
                      gamma);
}

template <class T>
Var<T> vf_loss(const model::ModelConfig& mcfg, ad::Binder<T>& b, Var<T> z, Var<T> zg,
               ad::Binder<T>& target_binder, Var<T> z_target, Var<T> zg_target,
               const VfPairs& pairs, const LossConfig& cfg) {
  return ad::mean(ad::expectile(
      vf_residuals(mcfg, b, z, zg, target_binder, z_target, zg_target, pairs, cfg.gamma),
      static_cast<T>(cfg.tau)));
}

template <class T>
Var<T> vf_loss(const model::ModelConfig& mcfg, ad::Binder<T>& b, Var<T> z, Var<T> zg,
               const VfPairs& pairs, const LossConfig& cfg) {
  return ad::mean(ad::expectile(vf_residuals(mcfg, b, z, zg, pairs, cfg.gamma),
                                static_cast<T>(cfg.tau)));
}

template <class T>
Var<T> pred_loss(const model::ModelConfig& mcfg, ad::Binder<T>& b, Var<T> z, Var<T> actions,
                 Var<T> targets, std::size_t segments, std::size_t length) {
  if (length < 2) throw DataError("prediction loss needs segments of length >= 2");
  if (z.dim(0) != segments * length || targets.shape() != z.shape() ||
      actions.dim(0) != segments * (length - 1))
    throw DataError("prediction loss: inconsistent segment shapes");
  std::vector<std::size_t> rows(segments);
  for (std::size_t s = 0; s < segments; ++s) rows[s] = s * length;
  Var<T> zh = ad::gather_rows(z, rows);
  Var<T> total;
  for (std::size_t t = 0; t + 1 < length; ++t) {
    std::vector<std::size_t> arows(segments), trows(segments);
    for (std::size_t s = 0; s < segments; ++s) {
      arows[s] = s * (length - 1) + t;
      trows[s] = s * length + t + 1;
    }
    zh = model::predict(mcfg, b, zh, ad::gather_rows(actions, arows));
    Var<T> err = ad::mean(ad::square(ad::sub(zh, ad::gather_rows(targets, trows))));
    total = t == 0 ? err : ad::add(total, err);
  }
  return ad::scale(total, static_cast<T>(1.0 / static_cast<double>(length - 1)));
}

template <class T>
Var<T> vcreg_loss(Var<T> z, const LossConfig& cfg) {
  const std::size_t n = z.dim(0), d = z.dim(1);
  if (n < 2) throw DataError("VCReg needs at least 2 samples");
  const T unbias = static_cast<T>(static_cast<double>(n) / static_cast<double>(n - 1));
  Var<T> c = ad::center_cols(z);
  Var<T> var = ad::scale(ad::col_mean(ad::square(c)), unbias);
  Var<T> std = ad::sqrt_eps(var, static_cast<T>(cfg.var_eps));
  Var<T> hinge = ad::mean(ad::relu(ad::add_scalar(ad::scale(std, T{-1}), T{1})));
  Var<T> cov = ad::scale(ad::matmul_tn(c, c), static_cast<T>(1.0 / static_cast<double>(n - 1)));
  // Off-diagonal mass: all squared entries minus the squared variances.
  Var<T> off = ad::sub(ad::sum(ad::square(cov)), ad::sum(ad::square(var)));
  return ad::add(ad::scale(hinge, static_cast<T>(cfg.var_weight)),
                 ad::scale(off, static_cast<T>(cfg.cov_weight / static_cast<double>(d))));
}

template <class T>
Var<T> vcreg_segments(Var<T> z, std::size_t segments, std::size_t length,
                      const LossConfig& cfg) {
  if (z.dim(0) != segments * length) throw DataError("VCReg: inconsistent segment shapes");
  if (cfg.vcreg_axes == VcregAxes::kBatchTime) return vcreg_loss(z, cfg);
  Var<T> total;
  for (std::size_t t = 0; t < length; ++t) {
    std::vector<std::size_t> rows(segments);
    for (std::size_t s = 0; s < segments; ++s) rows[s] = s * length + t;
    Var<T> l = vcreg_loss(ad::gather_rows(z, rows), cfg);
    total = t == 0 ? l : ad::add(total, l);
  }
  return ad::scale(total, static_cast<T>(1.0 / static_cast<double>(length)));
}

RowPairs successive_pairs(std::size_t segments, std::size_t length) {
  RowPairs out;
  for (std::size_t s = 0; s < segments; ++s)
    for (std::size_t t = 0; t + 1 < length; ++t)
      out.emplace_back(s * length + t, s * length + t + 1);
  return out;
}

RowPairs random_pairs(std::size_t rows, std::size_t count, Rng& rng) {
  if (rows < 2) throw DataError("random pairs need at least 2 rows");
  RowPairs out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = uniform_index(rng, rows);
    std::size_t b = uniform_index(rng, rows - 1);
    if (b >= a) ++b;
    out.emplace_back(a, b);
  }
  return out;
}

namespace {

template <class T>
Var<T> pair_distances(Var<T> z, const RowPairs& pairs) {
  std::vector<std::size_t> a, b;
  a.reserve(pairs.size());
  b.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    a.push_back(i);
    b.push_back(j);
  }
  return ad::row_norm(ad::sub(ad::gather_rows(z, a), ad::gather_rows(z, b)));
}

}  // namespace

template <class T>
Var<T> contrastive_loss(Var<T> z, const RowPairs& positives, const RowPairs& negatives,
                        const LossConfig& cfg) {
  if (positives.empty() || negatives.empty())
    throw DataError("contrastive loss needs positive and negative pairs");
  Var<T> pos = ad::mean(ad::square(ad::relu(
      ad::add_scalar(pair_distances(z, positives), static_cast<T>(-cfg.margin_pos)))));
  Var<T> neg = ad::mean(ad::square(ad::relu(ad::add_scalar(
      ad::scale(pair_distances(z, negatives), T{-1}), static_cast<T>(cfg.margin_neg)))));
  return ad::add(pos, neg);
}

template <class T>
Var<T> regressive_loss(Var<T> z, const RowPairs& successive) {
  if (successive.empty()) throw DataError("regressive loss needs successive pairs");
  return ad::mean(ad::square(ad::add_scalar(pair_distances(z, successive), T{-1})));
}

#define VGJEPA_LOSSES_INSTANTIATE(T)                                                      \
  template Var<T> bellman_residuals<T>(Var<T>, Var<T>, const std::vector<double>&, double); \
  template Var<T> vf_residuals<T>(const model::ModelConfig&, ad::Binder<T>&, Var<T>,      \
                                  Var<T>, const VfPairs&, double);                        \
  template Var<T> vf_loss<T>(const model::ModelConfig&, ad::Binder<T>&, Var<T>, Var<T>,   \
                             const VfPairs&, const LossConfig&);                          \
  template Var<T> vf_residuals<T>(const model::ModelConfig&, ad::Binder<T>&, Var<T>,      \
                                  Var<T>, ad::Binder<T>&, Var<T>, Var<T>, const VfPairs&, \
                                  double);                                                \
  template Var<T> vf_loss<T>(const model::ModelConfig&, ad::Binder<T>&, Var<T>, Var<T>,   \
                             ad::Binder<T>&, Var<T>, Var<T>, const VfPairs&,              \
                             const LossConfig&);                                          \
  template Var<T> pred_loss<T>(const model::ModelConfig&, ad::Binder<T>&, Var<T>, Var<T>, \
                               Var<T>, std::size_t, std::size_t);                         \
  template Var<T> vcreg_loss<T>(Var<T>, const LossConfig&);                               \
  template Var<T> vcreg_segments<T>(Var<T>, std::size_t, std::size_t, const LossConfig&); \
  template Var<T> contrastive_loss<T>(Var<T>, const RowPairs&, const RowPairs&,           \
                                      const LossConfig&);                                 \
  template Var<T> regressive_loss<T>(Var<T>, const RowPairs&);

VGJEPA_LOSSES_INSTANTIATE(float)
VGJEPA_LOSSES_INSTANTIATE(double)
#undef VGJEPA_LOSSES_INSTANTIATE

}  // namespace vgjepa::losses
