// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vgjepa/autodiff/optim.hpp"

namespace vgjepa::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares analytic gradients against central finite differences.
// Relative error per entry is |a - n| / max(|a|, |n|, floor).
template <class Build>
GradCheckReport check_gradients(ParamSet<double> params, Build&& build,
                                double eps = 1e-4, double floor = 1e-6) {
  const ForwardBackward<double> analytic = forward_backward(params, build);
  auto eval = [&](const ParamSet<double>& p) {
    Tape<double> tape;
    Binder<double> binder(tape, p, false);
    return build(tape, binder).value()[0];
  };
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<double>& value = params[i].value;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double orig = value[j];
      value[j] = orig + eps;
      const double up = eval(params);
      value[j] = orig - eps;
      const double down = eval(params);
      value[j] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.grads[i][j];
      const double abs_err = std::abs(a - numeric);
      const double rel =
          abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[i].name;
        report.worst_index = j;
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace vgjepa::ad
