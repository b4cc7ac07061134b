// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "vgjepa/env/observation.hpp"

namespace vgjepa::env {

void rasterize_rect(float* plane, std::size_t res, double scale, double x0,
                    double y0, double x1, double y1, float value) {
  const double px0 = x0 * scale, px1 = x1 * scale;
  const double py0 = y0 * scale, py1 = y1 * scale;
  const long c0 = std::max(0L, static_cast<long>(std::floor(px0)));
  const long c1 = std::min(static_cast<long>(res) - 1, static_cast<long>(std::ceil(px1)) - 1);
  const long r0 = std::max(0L, static_cast<long>(std::floor(py0)));
  const long r1 = std::min(static_cast<long>(res) - 1, static_cast<long>(std::ceil(py1)) - 1);
  for (long r = r0; r <= r1; ++r) {
    const double oy = std::min<double>(r + 1, py1) - std::max<double>(r, py0);
    if (oy <= 0) continue;
    for (long c = c0; c <= c1; ++c) {
      const double ox = std::min<double>(c + 1, px1) - std::max<double>(c, px0);
      if (ox <= 0) continue;
      float& dst = plane[r * static_cast<long>(res) + c];
      dst = std::min(1.0f, dst + value * static_cast<float>(ox * oy));
    }
  }
}

void rasterize_disc(float* plane, std::size_t res, double scale, double cx,
                    double cy, double radius, int samples) {
  const double pcx = cx * scale, pcy = cy * scale, pr = radius * scale;
  const double pr2 = pr * pr;
  const long c0 = std::max(0L, static_cast<long>(std::floor(pcx - pr)));
  const long c1 = std::min(static_cast<long>(res) - 1, static_cast<long>(std::floor(pcx + pr)));
  const long r0 = std::max(0L, static_cast<long>(std::floor(pcy - pr)));
  const long r1 = std::min(static_cast<long>(res) - 1, static_cast<long>(std::floor(pcy + pr)));
  if (samples <= 0) {
    samples = std::clamp(static_cast<int>(std::ceil(24.0 / std::max(pr, 1e-3))), 8, 64);
  }
  const double inv = 1.0 / samples;
  const float per = static_cast<float>(inv * inv);
  for (long r = r0; r <= r1; ++r) {
    for (long c = c0; c <= c1; ++c) {
      int hits = 0;
      for (int i = 0; i < samples; ++i) {
        const double dy = r + (i + 0.5) * inv - pcy;
        for (int j = 0; j < samples; ++j) {
          const double dx = c + (j + 0.5) * inv - pcx;
          if (dx * dx + dy * dy <= pr2) ++hits;
        }
      }
      plane[r * static_cast<long>(res) + c] = static_cast<float>(hits) * per;
    }
  }
}

}  // namespace vgjepa::env
