// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "vgjepa/autodiff/tensor.hpp"

namespace vgjepa::env {

// Rendered state: image [C, H, W] with values in [0, 1], plus an optional
// proprioceptive vector (agent velocity in the maze; empty for the wall).
struct Observation {
  ad::Tensor<float> image;
  std::vector<float> proprio;

  std::size_t channels() const { return image.dim(0); }
  std::size_t resolution() const { return image.dim(1); }
  friend bool operator==(const Observation&, const Observation&) = default;
};

// Fractional coverage of pixel-aligned rectangles, accumulated into one
// channel plane at `scale` pixels per world unit. Exact area, clamped to 1.
void rasterize_rect(float* plane, std::size_t res, double scale, double x0,
                    double y0, double x1, double y1, float value = 1.0f);

// Anti-aliased disc coverage via `samples`^2 supersampling per pixel;
// writes coverage into `plane` (not accumulated). samples <= 0 picks a
// density from the on-screen radius.
void rasterize_disc(float* plane, std::size_t res, double scale, double cx,
                    double cy, double radius, int samples = 0);

}  // namespace vgjepa::env
