// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace vgjepa::ad {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw NumericError("op inputs live on different tapes");
  }
  return *a.tape;
}

template <class T>
const Tensor<T>& val(Tape<T>& t, int id) {
  return t.value(Var<T>{&t, id});
}

template <class T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw NumericError(std::string(op) + ": shape mismatch " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void require_rank(Var<T> a, std::size_t r, const char* op) {
  if (a.value().rank() != r) {
    throw NumericError(std::string(op) + ": expected rank " +
                       std::to_string(r) + ", got " + shape_str(a.shape()));
  }
}

}  // namespace

// Elementwise unary ops; BWD is the derivative in terms of the input x.
#define VGJEPA_UNARY(NAME, FWD, BWD)                                        \
  template <class T>                                                        \
  Var<T> NAME(Var<T> a) {                                                   \
    Tape<T>& tape = *a.tape;                                                \
    const Tensor<T>& xin = a.value();                                       \
    Tensor<T> yout(xin.shape());                                            \
    for (std::size_t i = 0; i < xin.size(); ++i) {                          \
      const T x = xin[i];                                                   \
      yout[i] = (FWD);                                                      \
    }                                                                       \
    const int ia = a.id;                                                    \
    auto bw = [ia](const Tensor<T>& g, Tape<T>& t) {                         \
      const Tensor<T>& xs = val(t, ia);                                     \
      Tensor<T> gx(xs.shape());                                             \
      for (std::size_t i = 0; i < xs.size(); ++i) {                         \
        const T x = xs[i];                                                  \
        gx[i] = g[i] * (BWD);                                               \
      }                                                                     \
      t.accumulate(ia, gx);                                                 \
    };                                                                      \
    return tape.record(std::move(yout), a.requires_grad(), bw);             \
  }

VGJEPA_UNARY(relu, x > T{0} ? x : T{0}, x > T{0} ? T{1} : T{0})
VGJEPA_UNARY(square, x* x, T{2} * x)
VGJEPA_UNARY(sigmoid, T{1} / (T{1} + std::exp(-x)),
             (T{1} / (T{1} + std::exp(-x))) *
                 (T{1} - T{1} / (T{1} + std::exp(-x))))
#undef VGJEPA_UNARY

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a, b);
  require_same_shape(a, b, "add");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const int ia = a.id, ib = b.id;
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib](const Tensor<T>& g, Tape<T>& t) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a, b);
  require_same_shape(a, b, "sub");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib](const Tensor<T>& g, Tape<T>& t) {
                       t.accumulate(ia, g);
                       if (t.requires_grad(Var<T>{&t, ib})) {
                         Tensor<T> gb = g;
                         for (auto& v : gb.data()) v = -v;
                         t.accumulate(ib, gb);
                       }
                     });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a, b);
  require_same_shape(a, b, "mul");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  return tape.record(
      std::move(y), a.requires_grad() || b.requires_grad(),
      [ia, ib](const Tensor<T>& g, Tape<T>& t) {
        const Tensor<T>& av = val(t, ia);
        const Tensor<T>& bv2 = val(t, ib);
        if (t.requires_grad(Var<T>{&t, ia})) {
          Tensor<T> ga(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv2[i];
          t.accumulate(ia, ga);
        }
        if (t.requires_grad(Var<T>{&t, ib})) {
          Tensor<T> gb(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
          t.accumulate(ib, gb);
        }
      });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v *= s;
  const int ia = a.id;
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, s](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx = g;
                          for (auto& v : gx.data()) v *= s;
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> add_scalar(Var<T> a, T s) {
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v += s;
  const int ia = a.id;
  return a.tape->record(
      std::move(y), a.requires_grad(),
      [ia](const Tensor<T>& g, Tape<T>& t) { t.accumulate(ia, g); });
}

template <class T>
Var<T> scale_by(Var<T> a, Var<T> s) {
  Tape<T>& tape = tape_of(a, s);
  if (s.size() != 1) throw NumericError("scale_by: scale must be a scalar");
  const T sv = s.value()[0];
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v *= sv;
  const int ia = a.id, is = s.id;
  return tape.record(std::move(y), a.requires_grad() || s.requires_grad(),
                     [ia, is](const Tensor<T>& g, Tape<T>& t) {
                       const Tensor<T>& av = val(t, ia);
                       const T sv2 = val(t, is)[0];
                       if (t.requires_grad(Var<T>{&t, ia})) {
                         Tensor<T> ga = g;
                         for (auto& v : ga.data()) v *= sv2;
                         t.accumulate(ia, ga);
                       }
                       if (t.requires_grad(Var<T>{&t, is})) {
                         T acc{0};
                         for (std::size_t i = 0; i < g.size(); ++i)
                           acc += g[i] * av[i];
                         Tensor<T> gs(val(t, is).shape());
                         gs[0] = acc;
                         t.accumulate(is, gs);
                       }
                     });
}

template <class T>
Var<T> sqrt_eps(Var<T> a, T eps) {
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v = std::sqrt(v + eps);
  const int ia = a.id;
  auto saved = std::make_shared<Tensor<T>>(y);
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, saved](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx(g.shape());
                          for (std::size_t i = 0; i < g.size(); ++i)
                            gx[i] = g[i] * T{0.5} / (*saved)[i];
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> expectile(Var<T> x, T tau) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T w = xv[i] < T{0} ? T{1} - tau : tau;
    y[i] = w * xv[i] * xv[i];
  }
  const int ix = x.id;
  return x.tape->record(std::move(y), x.requires_grad(),
                        [ix, tau](const Tensor<T>& g, Tape<T>& t) {
                          const Tensor<T>& xs = val(t, ix);
                          Tensor<T> gx(g.shape());
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const T w = xs[i] < T{0} ? T{1} - tau : tau;
                            gx[i] = g[i] * T{2} * w * xs[i];
                          }
                          t.accumulate(ix, gx);
                        });
}

template <class T>
Var<T> stop_gradient(Var<T> a) {
  return a.tape->constant(a.value());
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) throw NumericError("matmul: inner dimension mismatch");
  Tensor<T> y(Shape{n, m});
  MapMat<T>(y.ptr(), n, m).noalias() =
      CMapMat<T>(a.value().ptr(), n, k) * CMapMat<T>(b.value().ptr(), k, m);
  const int ia = a.id, ib = b.id;
  return tape.record(
      std::move(y), a.requires_grad() || b.requires_grad(),
      [ia, ib, n, k, m](const Tensor<T>& g, Tape<T>& t) {
        CMapMat<T> G(g.ptr(), n, m);
        if (t.requires_grad(Var<T>{&t, ia})) {
          Tensor<T> ga(Shape{n, k});
          MapMat<T>(ga.ptr(), n, k).noalias() =
              G * CMapMat<T>(val(t, ib).ptr(), k, m).transpose();
          t.accumulate(ia, ga);
        }
        if (t.requires_grad(Var<T>{&t, ib})) {
          Tensor<T> gb(Shape{k, m});
          MapMat<T>(gb.ptr(), k, m).noalias() =
              CMapMat<T>(val(t, ia).ptr(), n, k).transpose() * G;
          t.accumulate(ib, gb);
        }
      });
}

template <class T>
Var<T> matmul_tn(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a, b);
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  const std::size_t n = a.dim(0), d = a.dim(1), e = b.dim(1);
  if (b.dim(0) != n) throw NumericError("matmul_tn: row count mismatch");
  Tensor<T> y(Shape{d, e});
  MapMat<T>(y.ptr(), d, e).noalias() =
      CMapMat<T>(a.value().ptr(), n, d).transpose() *
      CMapMat<T>(b.value().ptr(), n, e);
  const int ia = a.id, ib = b.id;
  return tape.record(
      std::move(y), a.requires_grad() || b.requires_grad(),
      [ia, ib, n, d, e](const Tensor<T>& g, Tape<T>& t) {
        CMapMat<T> G(g.ptr(), d, e);
        if (t.requires_grad(Var<T>{&t, ia})) {
          Tensor<T> ga(Shape{n, d});
          MapMat<T>(ga.ptr(), n, d).noalias() =
              CMapMat<T>(val(t, ib).ptr(), n, e) * G.transpose();
          t.accumulate(ia, ga);
        }
        if (t.requires_grad(Var<T>{&t, ib})) {
          Tensor<T> gb(Shape{n, e});
          MapMat<T>(gb.ptr(), n, e).noalias() =
              CMapMat<T>(val(t, ia).ptr(), n, d) * G;
          t.accumulate(ib, gb);
        }
      });
}

template <class T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  Tape<T>& tape = tape_of(x, weight);
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in || bias.size() != out) {
    throw NumericError("linear: input " + shape_str(x.shape()) +
                       " incompatible with weight " +
                       shape_str(weight.shape()));
  }
  Tensor<T> y(Shape{n, out});
  MapMat<T> Y(y.ptr(), n, out);
  Y.noalias() = CMapMat<T>(x.value().ptr(), n, in) *
                CMapMat<T>(weight.value().ptr(), out, in).transpose();
  Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
      bias.value().ptr(), out);
  const int ix = x.id, iw = weight.id, ib = bias.id;
  const bool rg =
      x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return tape.record(
      std::move(y), rg, [ix, iw, ib, n, in, out](const Tensor<T>& g, Tape<T>& t) {
        CMapMat<T> G(g.ptr(), n, out);
        if (t.requires_grad(Var<T>{&t, ix})) {
          Tensor<T> gx(Shape{n, in});
          MapMat<T>(gx.ptr(), n, in).noalias() =
              G * CMapMat<T>(val(t, iw).ptr(), out, in);
          t.accumulate(ix, gx);
        }
        if (t.requires_grad(Var<T>{&t, iw})) {
          Tensor<T> gw(Shape{out, in});
          MapMat<T>(gw.ptr(), out, in).noalias() =
              G.transpose() * CMapMat<T>(val(t, ix).ptr(), n, in);
          t.accumulate(iw, gw);
        }
        if (t.requires_grad(Var<T>{&t, ib})) {
          Tensor<T> gb(val(t, ib).shape());
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.ptr(), out) =
              G.colwise().sum();
          t.accumulate(ib, gb);
        }
      });
}

namespace {

struct ConvGeom {
  std::size_t n, c, h, w, o, k, stride, pad, ho, wo;
  std::size_t rows() const { return c * k * k; }
  std::size_t hw_out() const { return ho * wo; }
};

// Builds im2col columns for samples [n0, n0+nb): cols [C*K*K, nb*Ho*Wo].
template <class T>
void im2col(const T* x, const ConvGeom& g, std::size_t n0, std::size_t nb,
            T* cols) {
  const std::size_t ncols = nb * g.hw_out();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        T* row = cols + ((ci * g.k + kh) * g.k + kw) * ncols;
        for (std::size_t j = 0; j < nb; ++j) {
          const T* img = x + ((n0 + j) * g.c + ci) * g.h * g.w;
          T* dst = row + j * g.hw_out();
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const long ih = static_cast<long>(oh * g.stride + kh) -
                            static_cast<long>(g.pad);
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const long iw = static_cast<long>(ow * g.stride + kw) -
                              static_cast<long>(g.pad);
              const bool inside = ih >= 0 && iw >= 0 &&
                                  ih < static_cast<long>(g.h) &&
                                  iw < static_cast<long>(g.w);
              dst[oh * g.wo + ow] = inside ? img[ih * g.w + iw] : T{0};
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, const ConvGeom& g, std::size_t n0, std::size_t nb,
            T* dx) {
  const std::size_t ncols = nb * g.hw_out();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const T* row = cols + ((ci * g.k + kh) * g.k + kw) * ncols;
        for (std::size_t j = 0; j < nb; ++j) {
          T* img = dx + ((n0 + j) * g.c + ci) * g.h * g.w;
          const T* src = row + j * g.hw_out();
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const long ih = static_cast<long>(oh * g.stride + kh) -
                            static_cast<long>(g.pad);
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const long iw = static_cast<long>(ow * g.stride + kw) -
                              static_cast<long>(g.pad);
              if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
              img[ih * g.w + iw] += src[oh * g.wo + ow];
            }
          }
        }
      }
    }
  }
}

std::size_t conv_chunk(const ConvGeom& g) {
  constexpr std::size_t kBudget = std::size_t{1} << 22;
  const std::size_t per = g.rows() * g.hw_out();
  return std::max<std::size_t>(1, std::min(g.n, kBudget / std::max<std::size_t>(per, 1)));
}

}  // namespace

template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride,
              std::size_t pad) {
  Tape<T>& tape = tape_of(x, weight);
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  ConvGeom g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (weight.dim(1) != g.c || weight.dim(3) != g.k || bias.size() != g.o) {
    throw NumericError("conv2d: input " + shape_str(x.shape()) +
                       " incompatible with weight " +
                       shape_str(weight.shape()));
  }
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k || stride == 0) {
    throw NumericError("conv2d: kernel larger than padded input");
  }
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  Tensor<T> y(Shape{g.n, g.o, g.ho, g.wo});
  const std::size_t chunk = conv_chunk(g);
  std::vector<T> cols;
  RowMat<T> out;
  CMapMat<T> W(weight.value().ptr(), g.o, g.rows());
  const T* bptr = bias.value().ptr();
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, g.n - n0);
    const std::size_t ncols = nb * g.hw_out();
    cols.resize(g.rows() * ncols);
    im2col(x.value().ptr(), g, n0, nb, cols.data());
    out.noalias() = W * CMapMat<T>(cols.data(), g.rows(), ncols);
    for (std::size_t j = 0; j < nb; ++j) {
      for (std::size_t oc = 0; oc < g.o; ++oc) {
        T* dst = y.ptr() + ((n0 + j) * g.o + oc) * g.hw_out();
        const T* src = out.data() + oc * ncols + j * g.hw_out();
        for (std::size_t p = 0; p < g.hw_out(); ++p) dst[p] = src[p] + bptr[oc];
      }
    }
  }

  const int ix = x.id, iw = weight.id, ib = bias.id;
  const bool rg =
      x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return tape.record(
      std::move(y), rg, [ix, iw, ib, g](const Tensor<T>& gy, Tape<T>& t) {
        const bool need_x = t.requires_grad(Var<T>{&t, ix});
        const bool need_w = t.requires_grad(Var<T>{&t, iw});
        const bool need_b = t.requires_grad(Var<T>{&t, ib});
        Tensor<T> gw(Shape{g.o, g.c, g.k, g.k});
        Tensor<T> gb(Shape{g.o});
        Tensor<T> gx;
        if (need_x) gx = Tensor<T>(Shape{g.n, g.c, g.h, g.w});
        MapMat<T> GW(gw.ptr(), g.o, g.rows());
        CMapMat<T> W(val(t, iw).ptr(), g.o, g.rows());
        const std::size_t chunk = conv_chunk(g);
        std::vector<T> cols;
        std::vector<T> gcols;
        RowMat<T> G;
        for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
          const std::size_t nb = std::min(chunk, g.n - n0);
          const std::size_t ncols = nb * g.hw_out();
          G.resize(g.o, ncols);
          for (std::size_t j = 0; j < nb; ++j) {
            for (std::size_t oc = 0; oc < g.o; ++oc) {
              const T* src = gy.ptr() + ((n0 + j) * g.o + oc) * g.hw_out();
              std::copy(src, src + g.hw_out(),
                        G.data() + oc * ncols + j * g.hw_out());
            }
          }
          if (need_b) {
            for (std::size_t oc = 0; oc < g.o; ++oc) gb[oc] += G.row(oc).sum();
          }
          if (need_w) {
            cols.resize(g.rows() * ncols);
            im2col(val(t, ix).ptr(), g, n0, nb, cols.data());
            GW.noalias() +=
                G * CMapMat<T>(cols.data(), g.rows(), ncols).transpose();
          }
          if (need_x) {
            gcols.resize(g.rows() * ncols);
            MapMat<T>(gcols.data(), g.rows(), ncols).noalias() =
                W.transpose() * G;
            col2im(gcols.data(), g, n0, nb, gx.ptr());
          }
        }
        if (need_w) t.accumulate(iw, gw);
        if (need_b) t.accumulate(ib, gb);
        if (need_x) t.accumulate(ix, gx);
      });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> y = a.value();
  y.reshape(std::move(shape));
  const int ia = a.id;
  Shape orig = a.shape();
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, orig](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx = g;
                          gx.reshape(orig);
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> flatten(Var<T> a) {
  const std::size_t n = a.dim(0);
  return reshape(a, Shape{n, a.size() / std::max<std::size_t>(n, 1)});
}

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a, b);
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  if (b.dim(0) != n) throw NumericError("concat_cols: row count mismatch");
  Tensor<T> y(Shape{n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().ptr() + i * da, da, y.ptr() + i * (da + db));
    std::copy_n(b.value().ptr() + i * db, db, y.ptr() + i * (da + db) + da);
  }
  const int ia = a.id, ib = b.id;
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib, n, da, db](const Tensor<T>& g, Tape<T>& t) {
                       Tensor<T> ga(Shape{n, da});
                       Tensor<T> gb(Shape{n, db});
                       for (std::size_t i = 0; i < n; ++i) {
                         std::copy_n(g.ptr() + i * (da + db), da,
                                     ga.ptr() + i * da);
                         std::copy_n(g.ptr() + i * (da + db) + da, db,
                                     gb.ptr() + i * db);
                       }
                       t.accumulate(ia, ga);
                       t.accumulate(ib, gb);
                     });
}

template <class T>
Var<T> gather_rows(Var<T> a, const std::vector<std::size_t>& rows) {
  const Tensor<T>& av = a.value();
  if (av.rank() == 0) throw NumericError("gather_rows on a scalar");
  const std::size_t n = av.dim(0);
  const std::size_t stride = n == 0 ? 0 : av.size() / n;
  Shape shape = av.shape();
  shape[0] = rows.size();
  Tensor<T> y(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw NumericError("gather_rows: index out of range");
    std::copy_n(av.ptr() + rows[i] * stride, stride, y.ptr() + i * stride);
  }
  const int ia = a.id;
  Shape in_shape = av.shape();
  return a.tape->record(
      std::move(y), a.requires_grad(),
      [ia, rows, stride, in_shape](const Tensor<T>& g, Tape<T>& t) {
        Tensor<T> gx(in_shape);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          T* dst = gx.ptr() + rows[i] * stride;
          const T* src = g.ptr() + i * stride;
          for (std::size_t j = 0; j < stride; ++j) dst[j] += src[j];
        }
        t.accumulate(ia, gx);
      });
}

template <class T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  const int ia = a.id;
  return a.tape->record(Tensor<T>::scalar(acc), a.requires_grad(),
                        [ia](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx(val(t, ia).shape(), g[0]);
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.size();
  if (n == 0) throw NumericError("mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <class T>
Var<T> row_sum(Var<T> a) {
  require_rank(a, 2, "row_sum");
  const std::size_t n = a.dim(0), d = a.dim(1);
  Tensor<T> y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    T acc{0};
    for (std::size_t j = 0; j < d; ++j) acc += a.value()[i * d + j];
    y[i] = acc;
  }
  const int ia = a.id;
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, n, d](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx(Shape{n, d});
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              gx[i * d + j] = g[i];
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> row_mean(Var<T> a) {
  require_rank(a, 2, "row_mean");
  return scale(row_sum(a), T{1} / static_cast<T>(a.dim(1)));
}

template <class T>
Var<T> row_max(Var<T> a) {
  require_rank(a, 2, "row_max");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (d == 0) throw NumericError("row_max over empty rows");
  Tensor<T> y(Shape{n});
  std::vector<std::size_t> arg(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = a.value().ptr() + i * d;
    arg[i] = static_cast<std::size_t>(std::max_element(row, row + d) - row);
    y[i] = row[arg[i]];
  }
  const int ia = a.id;
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, n, d, arg](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx(Shape{n, d});
                          for (std::size_t i = 0; i < n; ++i)
                            gx[i * d + arg[i]] = g[i];
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> row_norm(Var<T> a) {
  require_rank(a, 2, "row_norm");
  const std::size_t n = a.dim(0), d = a.dim(1);
  Tensor<T> y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    T acc{0};
    for (std::size_t j = 0; j < d; ++j) {
      const T v = a.value()[i * d + j];
      acc += v * v;
    }
    y[i] = std::sqrt(acc);
  }
  const int ia = a.id;
  auto norms = std::make_shared<Tensor<T>>(y);
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, n, d, norms](const Tensor<T>& g, Tape<T>& t) {
                          const Tensor<T>& av = val(t, ia);
                          Tensor<T> gx(Shape{n, d});
                          for (std::size_t i = 0; i < n; ++i) {
                            const T nv = (*norms)[i];
                            if (nv <= T{0}) continue;
                            const T s = g[i] / nv;
                            for (std::size_t j = 0; j < d; ++j)
                              gx[i * d + j] = s * av[i * d + j];
                          }
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> col_mean(Var<T> a) {
  require_rank(a, 2, "col_mean");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (n == 0) throw NumericError("col_mean over zero rows");
  Tensor<T> y(Shape{d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[j] += a.value()[i * d + j];
  for (auto& v : y.data()) v /= static_cast<T>(n);
  const int ia = a.id;
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, n, d](const Tensor<T>& g, Tape<T>& t) {
                          Tensor<T> gx(Shape{n, d});
                          const T inv = T{1} / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              gx[i * d + j] = g[j] * inv;
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> center_cols(Var<T> a) {
  require_rank(a, 2, "center_cols");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (n == 0) throw NumericError("center_cols over zero rows");
  std::vector<T> mu(d, T{0});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += a.value()[i * d + j];
  for (auto& v : mu) v /= static_cast<T>(n);
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] -= mu[j];
  const int ia = a.id;
  return a.tape->record(std::move(y), a.requires_grad(),
                        [ia, n, d](const Tensor<T>& g, Tape<T>& t) {
                          std::vector<T> gm(d, T{0});
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              gm[j] += g[i * d + j];
                          for (auto& v : gm) v /= static_cast<T>(n);
                          Tensor<T> gx = g;
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              gx[i * d + j] -= gm[j];
                          t.accumulate(ia, gx);
                        });
}

template <class T>
Var<T> interval_union(Var<T> u, Var<T> v) {
  Tape<T>& tape = tape_of(u, v);
  require_same_shape(u, v, "interval_union");
  require_rank(u, 3, "interval_union");
  const std::size_t n = u.dim(0), k = u.dim(1), m = u.dim(2);
  const T* up = u.value().ptr();
  const T* vp = v.value().ptr();
  Tensor<T> y(Shape{n, k});
  // Each merged interval contributes +1 to the v entry ending it and -1 to
  // the u entry starting it.
  auto contrib = std::make_shared<std::vector<std::pair<std::size_t, std::size_t>>>();
  std::vector<std::size_t> order;
  order.reserve(m);
  for (std::size_t row = 0; row < n * k; ++row) {
    const T* a = up + row * m;
    const T* b = vp + row * m;
    order.clear();
    for (std::size_t i = 0; i < m; ++i) {
      if (b[i] > a[i]) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [a](std::size_t l, std::size_t r) {
      return a[l] < a[r] || (a[l] == a[r] && l < r);
    });
    T total{0};
    if (!order.empty()) {
      std::size_t start = order[0], end = order[0];
      for (std::size_t q = 1; q < order.size(); ++q) {
        const std::size_t i = order[q];
        if (a[i] > b[end]) {
          total += b[end] - a[start];
          contrib->emplace_back(row * m + start, row * m + end);
          start = i;
          end = i;
        } else if (b[i] > b[end]) {
          end = i;
        }
      }
      total += b[end] - a[start];
      contrib->emplace_back(row * m + start, row * m + end);
    }
    y[row] = total;
  }
  const int iu = u.id, iv = v.id;
  const std::size_t m_ = m;
  return tape.record(
      std::move(y), u.requires_grad() || v.requires_grad(),
      [iu, iv, contrib, m_](const Tensor<T>& g, Tape<T>& t) {
        Tensor<T> gu(val(t, iu).shape());
        Tensor<T> gv(val(t, iv).shape());
        for (const auto& [s, e] : *contrib) {
          const T gr = g[s / m_];
          gu[s] -= gr;
          gv[e] += gr;
        }
        t.accumulate(iu, gu);
        t.accumulate(iv, gv);
      });
}

#define VGJEPA_INSTANTIATE(T)                                                \
  template Var<T> add(Var<T>, Var<T>);                                      \
  template Var<T> sub(Var<T>, Var<T>);                                      \
  template Var<T> mul(Var<T>, Var<T>);                                      \
  template Var<T> scale(Var<T>, T);                                         \
  template Var<T> add_scalar(Var<T>, T);                                    \
  template Var<T> scale_by(Var<T>, Var<T>);                                 \
  template Var<T> relu(Var<T>);                                             \
  template Var<T> sigmoid(Var<T>);                                          \
  template Var<T> square(Var<T>);                                           \
  template Var<T> sqrt_eps(Var<T>, T);                                      \
  template Var<T> expectile(Var<T>, T);                                     \
  template Var<T> stop_gradient(Var<T>);                                    \
  template Var<T> matmul(Var<T>, Var<T>);                                   \
  template Var<T> matmul_tn(Var<T>, Var<T>);                                \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                           \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t); \
  template Var<T> reshape(Var<T>, Shape);                                   \
  template Var<T> flatten(Var<T>);                                          \
  template Var<T> concat_cols(Var<T>, Var<T>);                              \
  template Var<T> gather_rows(Var<T>, const std::vector<std::size_t>&);     \
  template Var<T> sum(Var<T>);                                              \
  template Var<T> mean(Var<T>);                                             \
  template Var<T> row_sum(Var<T>);                                          \
  template Var<T> row_mean(Var<T>);                                         \
  template Var<T> row_max(Var<T>);                                          \
  template Var<T> row_norm(Var<T>);                                         \
  template Var<T> col_mean(Var<T>);                                         \
  template Var<T> center_cols(Var<T>);                                      \
  template Var<T> interval_union(Var<T>, Var<T>);

VGJEPA_INSTANTIATE(float)
VGJEPA_INSTANTIATE(double)
#undef VGJEPA_INSTANTIATE

}  // namespace vgjepa::ad
