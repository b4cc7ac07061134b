// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vgjepa/autodiff/params.hpp"

namespace vgjepa::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update on the selected parameter indices (all when
// `subset` is empty). Increments the step counter once.
template <class T>
void adam_step(ParamSet<T>& params, const GradSet<T>& grads, double rate,
               const AdamConfig& cfg = {},
               const std::vector<std::size_t>& subset = {});

struct LrSchedule {
  double base_rate = 0.0028;
  std::uint64_t total_steps = 1;
  std::uint64_t warmup_steps = 0;

  // Warmup of 1% of the total, as used by the trainer.
  static LrSchedule with_default_warmup(double base, std::uint64_t total);
};

// Linear warmup to base_rate, then half-cosine decay reaching 0 at
// total_steps.
double cosine_rate(const LrSchedule& schedule, std::uint64_t step);

// One forward/backward pass: build(tape, binder) returns the scalar loss.
template <class T>
struct ForwardBackward {
  T loss;
  GradSet<T> grads;
};

template <class T, class Build>
ForwardBackward<T> forward_backward(const ParamSet<T>& params, Build&& build) {
  Tape<T> tape;
  Binder<T> binder(tape, params, true);
  Var<T> loss = build(tape, binder);
  if (loss.size() != 1) {
    throw NumericError("loss output must be scalar, got shape " +
                       shape_str(loss.shape()));
  }
  tape.backward(loss);
  ForwardBackward<T> out{loss.value()[0], zero_grads(params)};
  binder.collect(out.grads);
  return out;
}

}  // namespace vgjepa::ad
