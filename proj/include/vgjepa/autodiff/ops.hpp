// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "vgjepa/autodiff/tape.hpp"

// Fixed operator vocabulary for the networks and losses in this project.
// All ops take and return Var handles on the same tape; gradients flow only
// into inputs that require grad.
namespace vgjepa::ad {

// Elementwise.
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, T s);
template <class T> Var<T> add_scalar(Var<T> a, T s);
// a * s where s is a single-element var (broadcast).
template <class T> Var<T> scale_by(Var<T> a, Var<T> s);
template <class T> Var<T> relu(Var<T> a);
template <class T> Var<T> sigmoid(Var<T> a);
template <class T> Var<T> square(Var<T> a);
// sqrt(a + eps).
template <class T> Var<T> sqrt_eps(Var<T> a, T eps);
// |tau - 1[x < 0]| * x^2, elementwise.
template <class T> Var<T> expectile(Var<T> x, T tau);

// Same value, no gradient path to the input.
template <class T> Var<T> stop_gradient(Var<T> a);

// Linear algebra. Row-major matrices.
template <class T> Var<T> matmul(Var<T> a, Var<T> b);     // [N,K]x[K,M]
template <class T> Var<T> matmul_tn(Var<T> a, Var<T> b);  // a^T b
// x [N,I], weight [O,I], bias [O] -> [N,O].
template <class T> Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

// x [N,C,H,W], weight [O,C,K,K], bias [O] -> [N,O,H',W'].
template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride,
              std::size_t pad);

// Shape.
template <class T> Var<T> reshape(Var<T> a, Shape shape);
// Flattens all but the first dimension.
template <class T> Var<T> flatten(Var<T> a);
template <class T> Var<T> concat_cols(Var<T> a, Var<T> b);  // [N,A],[N,B]
// Selects first-dimension slices; repeated indices accumulate gradient.
template <class T>
Var<T> gather_rows(Var<T> a, const std::vector<std::size_t>& rows);

// Reductions.
template <class T> Var<T> sum(Var<T> a);
template <class T> Var<T> mean(Var<T> a);
template <class T> Var<T> row_sum(Var<T> a);   // [N,D] -> [N]
template <class T> Var<T> row_mean(Var<T> a);  // [N,D] -> [N]
template <class T> Var<T> row_max(Var<T> a);   // [N,D] -> [N]
// Euclidean norm of each row; subgradient 0 at the origin.
template <class T> Var<T> row_norm(Var<T> a);
template <class T> Var<T> col_mean(Var<T> a);     // [N,D] -> [D]
template <class T> Var<T> center_cols(Var<T> a);  // a - col_mean(a)

// Measure of the union of intervals [u_i, max(u_i, v_i)] over the last
// axis. u, v [N,K,M] -> [N,K].
template <class T> Var<T> interval_union(Var<T> u, Var<T> v);

}  // namespace vgjepa::ad
