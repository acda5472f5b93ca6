// mhfa/ops.hpp
//
// Copyright 2026  The mhfa-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Differentiable operations over Graph variables. Matrices are rank-2; a few
// operations also accept rank-1 vectors where noted.

#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mhfa/autograd.hpp"

namespace mhfa {

namespace kernel {

/// C = op(A)·op(B) on raw matrices, where op transposes when requested.
inline Tensor gemm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  const std::size_t n = tb ? b.rows() : b.cols();
  if (k != kb)
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                     (ta ? "^T" : "") + " vs " + shape_str(b.shape()) + (tb ? "^T" : ""));
  Tensor c({m, n});
  const std::size_t lda = a.cols(), ldb = b.cols();
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? A[p * lda + i] : A[i * lda + p];
      if (av == 0.0) continue;
      double* crow = C + i * n;
      if (!tb) {
        const double* brow = B + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * B[j * ldb + p];
      }
    }
  }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace kernel

namespace detail {

inline void require_matrix(const Var& v, const char* op) {
  if (v.value().rank() != 2)
    throw ShapeError(std::string(op) + " expects a matrix, got " + shape_str(v.shape()));
}

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Row-broadcast operand: rank-1 [N] or rank-2 [1xN].
inline void require_row(const Var& x, const Var& b, const char* op) {
  if (b.value().size() != x.value().cols() || b.value().rows() != 1)
    throw ShapeError(std::string(op) + ": row " + shape_str(b.shape()) +
                     " does not broadcast over " + shape_str(x.shape()));
}

}  // namespace detail

/// a·b for a [MxK] and b [KxN].
inline Var matmul(Var a, Var b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  Tensor c = kernel::gemm(a.value(), false, b.value(), false);
  return a.graph().emit(std::move(c), {a, b}, [a, b](Graph& g, const Tensor& dc) {
    if (g.requires_grad(a)) g.accumulate(a, kernel::gemm(dc, false, b.value(), true));
    if (g.requires_grad(b)) g.accumulate(b, kernel::gemm(a.value(), true, dc, false));
  });
}

inline Var transpose(Var a) {
  detail::require_matrix(a, "transpose");
  return a.graph().emit(kernel::transpose(a.value()), {a}, [a](Graph& g, const Tensor& d) {
    g.accumulate(a, kernel::transpose(d));
  });
}

inline Var add(Var a, Var b) {
  detail::require_same(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
    g.accumulate(a, d);
    g.accumulate(b, d);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
    g.accumulate(a, d);
    Tensor nd = d;
    nd *= -1.0;
    g.accumulate(b, nd);
  });
}

/// Element-wise product.
inline Var mul(Var a, Var b) {
  detail::require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.graph().emit(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
    Tensor da = d, db = d;
    for (std::size_t i = 0; i < d.size(); ++i) {
      da[i] *= b.value()[i];
      db[i] *= a.value()[i];
    }
    g.accumulate(a, da);
    g.accumulate(b, db);
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  out *= s;
  return a.graph().emit(std::move(out), {a}, [a, s](Graph& g, const Tensor& d) {
    Tensor da = d;
    da *= s;
    g.accumulate(a, da);
  });
}

/// x [MxN] + b broadcast over rows.
inline Var add_row(Var x, Var b) {
  detail::require_matrix(x, "add_row");
  detail::require_row(x, b, "add_row");
  Tensor out = x.value();
  const std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += b.value()[j];
  return x.graph().emit(std::move(out), {x, b}, [x, b, m, n](Graph& g, const Tensor& d) {
    g.accumulate(x, d);
    if (g.requires_grad(b)) {
      Tensor db(b.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) db[j] += d(i, j);
      g.accumulate(b, db);
    }
  });
}

/// x [MxN] * b broadcast over rows.
inline Var mul_row(Var x, Var b) {
  detail::require_matrix(x, "mul_row");
  detail::require_row(x, b, "mul_row");
  Tensor out = x.value();
  const std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= b.value()[j];
  return x.graph().emit(std::move(out), {x, b}, [x, b, m, n](Graph& g, const Tensor& d) {
    if (g.requires_grad(x)) {
      Tensor dx = d;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dx(i, j) *= b.value()[j];
      g.accumulate(x, dx);
    }
    if (g.requires_grad(b)) {
      Tensor db(b.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) db[j] += d(i, j) * x.value()(i, j);
      g.accumulate(b, db);
    }
  });
}

/// Exponential normalization along `axis`, with max-subtraction. Rank-1
/// tensors take axis 0; matrices take axis 0 (down columns) or 1 (along rows).
inline Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (xv.rank() > 2 || axis >= xv.rank())
    throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for " +
                     shape_str(xv.shape()));
  if (!xv.all_finite()) throw NumericError("softmax input contains non-finite values");
  // View as rows x cols; "lanes" are the slices that must sum to one.
  const std::size_t rows = xv.rows(), cols = xv.cols();
  const bool down = (xv.rank() == 2 && axis == 0);
  const std::size_t lanes = down ? cols : rows;
  const std::size_t len = down ? rows : cols;
  auto at = [&](std::size_t lane, std::size_t k) {
    return down ? k * cols + lane : lane * cols + k;
  };
  Tensor y(xv.shape());
  for (std::size_t l = 0; l < lanes; ++l) {
    double mx = xv[at(l, 0)];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[at(l, k)]);
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) s += (y[at(l, k)] = std::exp(xv[at(l, k)] - mx));
    for (std::size_t k = 0; k < len; ++k) y[at(l, k)] /= s;
  }
  Tensor yc = y;
  return x.graph().emit(std::move(y), {x}, [x, yc = std::move(yc), lanes, len, down, cols](
                                              Graph& g, const Tensor& dy) {
    auto idx = [&](std::size_t lane, std::size_t k) {
      return down ? k * cols + lane : lane * cols + k;
    };
    Tensor dx(yc.shape());
    for (std::size_t l = 0; l < lanes; ++l) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += dy[idx(l, k)] * yc[idx(l, k)];
      for (std::size_t k = 0; k < len; ++k)
        dx[idx(l, k)] = yc[idx(l, k)] * (dy[idx(l, k)] - dot);
    }
    g.accumulate(x, dx);
  });
}

/// sum_l w[l] * layers[l]; `w` is rank-1 with one entry per layer.
inline Var weighted_layer_sum(std::span<const Var> layers, Var w) {
  if (layers.empty()) throw ShapeError("weighted_layer_sum: empty layer stack");
  if (w.value().rank() != 1 || w.value().size() != layers.size())
    throw ShapeError("weighted_layer_sum: weights " + shape_str(w.shape()) + " for " +
                     std::to_string(layers.size()) + " layers");
  const Shape& s0 = layers[0].shape();
  for (std::size_t l = 1; l < layers.size(); ++l)
    if (layers[l].shape() != s0)
      throw ShapeError("weighted_layer_sum: ragged stack, layer 0 is " + shape_str(s0) +
                       " but layer " + std::to_string(l) + " is " +
                       shape_str(layers[l].shape()));
  Tensor out(s0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double wl = w.value()[l];
    const Tensor& z = layers[l].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wl * z[i];
  }
  std::vector<Var> inputs(layers.begin(), layers.end());
  inputs.push_back(w);
  std::vector<Var> ls(layers.begin(), layers.end());
  return w.graph().emit(std::move(out), inputs, [ls, w](Graph& g, const Tensor& d) {
    Tensor dw(w.shape());
    for (std::size_t l = 0; l < ls.size(); ++l) {
      const Tensor& z = ls[l].value();
      double acc = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * z[i];
      dw[l] = acc;
      if (g.requires_grad(ls[l])) {
        Tensor dz = d;
        dz *= w.value()[l];
        g.accumulate(ls[l], dz);
      }
    }
    g.accumulate(w, dw);
  });
}

/// Per-row standardization (zero mean, unit variance), no affine part.
inline Var layer_norm_rows(Var x, double eps = 1e-5) {
  detail::require_matrix(x, "layer_norm_rows");
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor y(xv.shape());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(i, j);
    mu /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y(i, j) = (xv(i, j) - mu) * inv_std[i];
  }
  Tensor yc = y;
  return x.graph().emit(std::move(y), {x}, [x, yc = std::move(yc), inv_std = std::move(inv_std), m, n](
                                                Graph& g, const Tensor& dy) {
    Tensor dx({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double mdy = 0.0, mdyy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        mdy += dy(i, j);
        mdyy += dy(i, j) * yc(i, j);
      }
      mdy /= n;
      mdyy /= n;
      for (std::size_t j = 0; j < n; ++j)
        dx(i, j) = inv_std[i] * (dy(i, j) - mdy - yc(i, j) * mdyy);
    }
    g.accumulate(x, dx);
  });
}

/// Applies f elementwise with derivative df evaluated at the input.
template <class F, class DF>
Var map_elementwise(Var x, F f, DF df) {
  Tensor y = x.value();
  for (double& v : y.storage()) v = f(v);
  return x.graph().emit(std::move(y), {x}, [x, df](Graph& g, const Tensor& d) {
    Tensor dx = d;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= df(x.value()[i]);
    g.accumulate(x, dx);
  });
}

/// Tanh-approximated GELU.
inline Var gelu(Var x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return map_elementwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
      [](double v) {
        const double t = std::tanh(k * (v + c * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
      });
}

inline Var tanh(Var x) {
  return map_elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

inline Var square(Var x) {
  return map_elementwise(
      x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

/// sqrt(max(x, floor)); zero gradient where the floor is active.
inline Var sqrt_clamped(Var x, double floor) {
  return map_elementwise(
      x, [floor](double v) { return std::sqrt(std::max(v, floor)); },
      [floor](double v) { return v > floor ? 0.5 / std::sqrt(v) : 0.0; });
}

/// Columns [begin, begin+count) of a matrix.
inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  detail::require_matrix(x, "slice_cols");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (count == 0 || begin + count > n)
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  Tensor y({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y(i, j) = x.value()(i, begin + j);
  return x.graph().emit(std::move(y), {x}, [x, begin, count, m, n](Graph& g, const Tensor& d) {
    Tensor dx({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) dx(i, begin + j) = d(i, j);
    g.accumulate(x, dx);
  });
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.value().rows() != m)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    n += p.value().cols();
  }
  Tensor y({m, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) y(i, off + j) = v(i, j);
    off += v.cols();
  }
  return parts[0].graph().emit(std::move(y), parts, [parts, m](Graph& g, const Tensor& d) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t c = p.value().cols();
      if (g.requires_grad(p)) {
        Tensor dp({m, c});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) dp(i, j) = d(i, off + j);
        g.accumulate(p, dp);
      }
      off += c;
    }
  });
}

/// Vertical concatenation of matrices with equal column counts.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.value().cols() != n)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    m += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(m * n);
  for (const Var& p : parts)
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return parts[0].graph().emit(Tensor({m, n}, std::move(data)), parts,
                               [parts](Graph& g, const Tensor& d) {
                                 std::size_t off = 0;
                                 for (const Var& p : parts) {
                                   const std::size_t cnt = p.value().size();
                                   if (g.requires_grad(p)) {
                                     std::vector<double> dp(d.data().begin() + off,
                                                            d.data().begin() + off + cnt);
                                     g.accumulate(p, Tensor(p.shape(), std::move(dp)));
                                   }
                                   off += cnt;
                                 }
                               });
}

/// Same data, new shape of equal element count.
inline Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().size())
    throw ShapeError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> d(x.value().data().begin(), x.value().data().end());
  return x.graph().emit(Tensor(std::move(shape), std::move(d)), {x},
                        [x](Graph& g, const Tensor& dy) {
                          std::vector<double> dd(dy.data().begin(), dy.data().end());
                          g.accumulate(x, Tensor(x.shape(), std::move(dd)));
                        });
}

/// Column means of a matrix, as [1xN].
inline Var mean_rows(Var x) {
  detail::require_matrix(x, "mean_rows");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  Tensor y({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += x.value()(i, j);
  y *= 1.0 / static_cast<double>(m);
  return x.graph().emit(std::move(y), {x}, [x, m, n](Graph& g, const Tensor& d) {
    Tensor dx({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dx(i, j) = d[j] / static_cast<double>(m);
    g.accumulate(x, dx);
  });
}

/// Sum of all elements, as [1].
inline Var sum_all(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph().emit(Tensor({1}, s), {x}, [x](Graph& g, const Tensor& d) {
    g.accumulate(x, Tensor(x.shape(), d[0]));
  });
}

/// Each row scaled to unit L2 norm.
inline Var l2_normalize_rows(Var x) {
  detail::require_matrix(x, "l2_normalize_rows");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  Tensor y = x.value();
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += y(i, j) * y(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i]))
      throw NumericError("l2_normalize_rows: row " + std::to_string(i) +
                         " has zero or non-finite norm");
    for (std::size_t j = 0; j < n; ++j) y(i, j) /= norms[i];
  }
  Tensor yc = y;
  return x.graph().emit(std::move(y), {x}, [x, yc = std::move(yc), norms = std::move(norms), m, n](
                                               Graph& g, const Tensor& d) {
    Tensor dx({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += yc(i, j) * d(i, j);
      for (std::size_t j = 0; j < n; ++j) dx(i, j) = (d(i, j) - yc(i, j) * dot) / norms[i];
    }
    g.accumulate(x, dx);
  });
}

/// Each column scaled to unit L2 norm.
inline Var l2_normalize_cols(Var x) { return transpose(l2_normalize_rows(transpose(x))); }

/// Additive angular margin on the target entries of a cosine matrix [BxC]:
/// cos(theta_y + m) with theta_y + m clamped to [0, pi]; other entries pass through.
inline Var angular_margin(Var cosines, const std::vector<std::size_t>& labels, double margin) {
  detail::require_matrix(cosines, "angular_margin");
  const std::size_t b = cosines.value().rows(), c = cosines.value().cols();
  if (labels.size() != b)
    throw ShapeError("angular_margin: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  for (std::size_t i = 0; i < b; ++i)
    if (labels[i] >= c)
      throw LabelError("label " + std::to_string(labels[i]) + " out of range [0, " +
                       std::to_string(c) + ")");
  const double cm = std::cos(margin), sm = std::sin(margin);
  Tensor y = cosines.value();
  std::vector<double> slope(b, 1.0);
  for (std::size_t i = 0; i < b; ++i) {
    double& v = y(i, labels[i]);
    if (margin == 0.0) continue;
    const double cs = std::clamp(v, -1.0, 1.0);
    if (cs < -cm) {  // theta + m beyond pi
      v = -1.0;
      slope[i] = 0.0;
    } else {
      const double sn = std::sqrt(std::max(1.0 - cs * cs, 0.0));
      v = cs * cm - sn * sm;
      slope[i] = cm + cs * sm / std::max(sn, 1e-12);
    }
  }
  return cosines.graph().emit(std::move(y), {cosines},
                              [cosines, labels, slope = std::move(slope)](Graph& g,
                                                                          const Tensor& d) {
                                Tensor dx = d;
                                for (std::size_t i = 0; i < labels.size(); ++i)
                                  dx(i, labels[i]) *= slope[i];
                                g.accumulate(cosines, dx);
                              });
}

/// Mean over rows of softmax cross-entropy against integer labels, as [1].
inline Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  detail::require_matrix(logits, "cross_entropy");
  const Tensor& z = logits.value();
  const std::size_t b = z.rows(), c = z.cols();
  if (labels.size() != b)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  if (!z.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  Tensor p(z.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c)
      throw LabelError("label " + std::to_string(labels[i]) + " out of range [0, " +
                       std::to_string(c) + ")");
    double mx = z(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (p(i, j) = std::exp(z(i, j) - mx));
    for (std::size_t j = 0; j < c; ++j) p(i, j) /= s;
    loss += (mx + std::log(s)) - z(i, labels[i]);
  }
  loss /= static_cast<double>(b);
  return logits.graph().emit(Tensor({1}, loss), {logits},
                             [logits, labels, p = std::move(p), b](Graph& g, const Tensor& d) {
                               Tensor dz = p;
                               for (std::size_t i = 0; i < b; ++i) dz(i, labels[i]) -= 1.0;
                               dz *= d[0] / static_cast<double>(b);
                               g.accumulate(logits, dz);
                             });
}

/// sum (x - target)^2 against a constant tensor, as [1].
inline Var squared_distance(Var x, const Tensor& target) {
  x.value().require_same_shape(target, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = x.value()[i] - target[i];
    s += diff * diff;
  }
  return x.graph().emit(Tensor({1}, s), {x}, [x, target](Graph& g, const Tensor& d) {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = 2.0 * (x.value()[i] - target[i]) * d[0];
    g.accumulate(x, dx);
  });
}

}  // namespace mhfa
