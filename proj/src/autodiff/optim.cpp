// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/autodiff/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vgjepa::ad {

template <class T>
void adam_step(ParamSet<T>& params, const GradSet<T>& grads, double rate,
               const AdamConfig& cfg, const std::vector<std::size_t>& subset) {
  if (!(rate > 0.0)) {
    throw NumericError("adam_step: learning rate must be positive, got " +
                       std::to_string(rate));
  }
  if (grads.size() != params.size()) {
    throw NumericError("adam_step: gradient set does not match parameters");
  }
  std::vector<std::size_t> all;
  const std::vector<std::size_t>* idx = &subset;
  if (subset.empty()) {
    all.resize(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    idx = &all;
  }
  for (std::size_t i : *idx) {
    if (grads[i].shape() != params[i].value.shape()) {
      throw NumericError("adam_step: gradient shape mismatch for " +
                         params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for " +
                         params[i].name);
    }
  }
  params.increment_step();
  const double t = static_cast<double>(params.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i : *idx) {
    auto& e = params[i];
    const Tensor<T>& g = grads[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      e.m[j] = b1 * e.m[j] + (T{1} - b1) * g[j];
      e.v[j] = b2 * e.v[j] + (T{1} - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(e.m[j]) / bc1;
      const double vhat = static_cast<double>(e.v[j]) / bc2;
      e.value[j] -= static_cast<T>(rate * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template void adam_step(ParamSet<float>&, const GradSet<float>&, double,
                        const AdamConfig&, const std::vector<std::size_t>&);
template void adam_step(ParamSet<double>&, const GradSet<double>&, double,
                        const AdamConfig&, const std::vector<std::size_t>&);

LrSchedule LrSchedule::with_default_warmup(double base, std::uint64_t total) {
  return LrSchedule{base, total, total / 100};
}

double cosine_rate(const LrSchedule& s, std::uint64_t step) {
  if (s.total_steps == 0 || step > s.total_steps) {
    throw ConfigError("cosine_rate: step " + std::to_string(step) +
                      " outside [0, " + std::to_string(s.total_steps) + "]");
  }
  if (s.warmup_steps >= s.total_steps) {
    throw ConfigError("cosine_rate: warmup must be shorter than the schedule");
  }
  if (step < s.warmup_steps) {
    return s.base_rate * static_cast<double>(step + 1) /
           static_cast<double>(s.warmup_steps);
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return s.base_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace vgjepa::ad
