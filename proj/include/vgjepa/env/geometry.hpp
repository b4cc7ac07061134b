// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

namespace vgjepa::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Rescales v to at most max_norm, keeping direction.
inline Vec2 clip_norm(Vec2 v, double max_norm) {
  const double n = v.norm();
  if (n <= max_norm || n == 0.0) return v;
  return (max_norm / n) * v;
}

// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
  double x0, y0, x1, y1;

  Rect expanded(double r) const { return {x0 - r, y0 - r, x1 + r, y1 + r}; }
  // Strict interior test; touching the boundary is not overlap.
  bool contains_strict(Vec2 p) const {
    return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1;
  }
};

}  // namespace vgjepa::env
