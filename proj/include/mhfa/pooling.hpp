// mhfa/pooling.hpp
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

// Utterance-level speaker embedding back-ends over a layer stack:
//
//   topattn  attentive mean+std statistics of the top layer only
//   wavg     O = sum_l w[l] Z_l, frame mean, linear projection
//   mhfa     two layer-weighted streams (keys, values), compressed to D dims;
//            H learned queries attend over frames, per-head value means are
//            concatenated and projected
//
// All three end in an L2 normalization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mhfa/autograd.hpp"
#include "mhfa/encoder.hpp"
#include "mhfa/ops.hpp"

namespace mhfa {

enum class BackendKind { topattn, wavg, mhfa };

enum class ConstraintMode { none, shared_weights, shared_linear, shared_both };

inline std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::topattn: return "topattn";
    case BackendKind::wavg: return "wavg";
    case BackendKind::mhfa: return "mhfa";
  }
  return "?";
}

inline std::string to_string(ConstraintMode m) {
  switch (m) {
    case ConstraintMode::none: return "none";
    case ConstraintMode::shared_weights: return "shared_weights";
    case ConstraintMode::shared_linear: return "shared_linear";
    case ConstraintMode::shared_both: return "shared_both";
  }
  return "?";
}

inline BackendKind parse_backend(const std::string& s) {
  if (s == "topattn") return BackendKind::topattn;
  if (s == "wavg") return BackendKind::wavg;
  if (s == "mhfa") return BackendKind::mhfa;
  throw ConfigError("unknown backend '" + s + "' (expected topattn, wavg or mhfa)");
}

inline ConstraintMode parse_constraint(const std::string& s) {
  if (s == "none") return ConstraintMode::none;
  if (s == "shared_weights") return ConstraintMode::shared_weights;
  if (s == "shared_linear") return ConstraintMode::shared_linear;
  if (s == "shared_both") return ConstraintMode::shared_both;
  throw ConfigError("unknown constraint '" + s +
                    "' (expected none, shared_weights, shared_linear or shared_both)");
}

/// Unit-norm utterance embedding [E].
struct SpeakerEmbedding {
  Tensor vector;

  double norm() const {
    double s = 0.0;
    for (double v : vector.data()) s += v * v;
    return std::sqrt(s);
  }
};

struct BackendDims {
  std::size_t n_layers = 5;     // entries in the stack, L+1
  std::size_t feature_dim = 32;  // F
  std::size_t compress_dim = 16;  // D
  std::size_t heads = 8;          // H
  std::size_t embed_dim = 32;     // E

  void validate() const {
    if (n_layers < 1 || feature_dim < 1) throw ConfigError("backend stack dimensions must be positive");
    if (compress_dim < 1) throw ConfigError("backend.compress_dim must be >= 1");
    if (heads < 1) throw ConfigError("backend.heads must be >= 1");
    if (embed_dim < 1) throw ConfigError("backend.embed_dim must be >= 1");
  }
};

struct MhfaParams {
  Param w_k, w_v;  // [L+1] layer weights of the key and value streams
  Param s_k, s_v;  // [F x D] compressions
  Param q;         // [D x H] one query per column
  Param w_emb;     // [(H*D) x E]
};

struct WavgParams {
  Param w;      // [L+1]
  Param w_emb;  // [F x E]
};

struct TopAttnParams {
  Param w1;     // [F x hidden]
  Param b1;     // [hidden]
  Param v;      // [hidden x 1]
  Param w_emb;  // [2F x E]
};

namespace detail {

inline Tensor fan_in_uniform(std::mt19937_64& rng, Shape s, std::size_t fan_in) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> d(-a, a);
  Tensor t(std::move(s));
  for (double& v : t.storage()) v = d(rng);
  return t;
}

// Raw layer weights start at the uniform average 1/(L+1).
inline Tensor uniform_layer_weights(std::size_t n) {
  return Tensor({n}, 1.0 / static_cast<double>(n));
}

inline void check_stack(std::span<const Var> stack, std::size_t n_layers, std::size_t dim) {
  if (stack.empty()) throw ShapeError("empty layer stack");
  if (stack.size() != n_layers)
    throw ShapeError("back-end expects " + std::to_string(n_layers) + " layers, stack has " +
                     std::to_string(stack.size()));
  const Shape& s0 = stack[0].shape();
  if (s0.size() != 2) throw ShapeError("layer stack entries must be matrices");
  if (s0[1] != dim)
    throw ShapeError("back-end expects feature dim " + std::to_string(dim) + ", stack has " +
                     shape_str(s0));
  for (std::size_t l = 1; l < stack.size(); ++l)
    if (stack[l].shape() != s0)
      throw ShapeError("ragged layer stack: layer " + std::to_string(l) + " is " +
                       shape_str(stack[l].shape()) + ", layer 0 is " + shape_str(s0));
}

inline std::vector<double> softmax_values(std::span<const double> x) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] = std::exp(x[i] - mx));
  for (double& v : y) v /= s;
  return y;
}

}  // namespace detail

inline MhfaParams init_mhfa(const BackendDims& d, std::uint64_t seed) {
  d.validate();
  std::mt19937_64 rng(seed);
  MhfaParams p;
  p.w_k = make_param("backend.w_k", detail::uniform_layer_weights(d.n_layers));
  p.w_v = make_param("backend.w_v", detail::uniform_layer_weights(d.n_layers));
  p.s_k = make_param("backend.s_k",
                     detail::fan_in_uniform(rng, {d.feature_dim, d.compress_dim}, d.feature_dim));
  p.s_v = make_param("backend.s_v",
                     detail::fan_in_uniform(rng, {d.feature_dim, d.compress_dim}, d.feature_dim));
  Tensor q({d.compress_dim, d.heads});
  std::normal_distribution<double> n01(0.0, 1.0);
  const double qs = 1.0 / std::sqrt(static_cast<double>(d.compress_dim));
  for (double& v : q.storage()) v = qs * n01(rng);
  p.q = make_param("backend.q", std::move(q));
  p.w_emb = make_param("backend.w_emb",
                       detail::fan_in_uniform(rng, {d.heads * d.compress_dim, d.embed_dim},
                                              d.heads * d.compress_dim));
  return p;
}

inline WavgParams init_wavg(const BackendDims& d, std::uint64_t seed) {
  d.validate();
  std::mt19937_64 rng(seed);
  WavgParams p;
  p.w = make_param("backend.w", detail::uniform_layer_weights(d.n_layers));
  p.w_emb = make_param("backend.w_emb",
                       detail::fan_in_uniform(rng, {d.feature_dim, d.embed_dim}, d.feature_dim));
  return p;
}

inline std::size_t topattn_hidden(std::size_t feature_dim) { return (feature_dim + 1) / 2; }

inline TopAttnParams init_topattn(const BackendDims& d, std::uint64_t seed) {
  d.validate();
  std::mt19937_64 rng(seed);
  const std::size_t h = topattn_hidden(d.feature_dim);
  TopAttnParams p;
  p.w1 = make_param("backend.att.w1", detail::fan_in_uniform(rng, {d.feature_dim, h}, d.feature_dim));
  p.b1 = make_param("backend.att.b1", Tensor({h}));
  p.v = make_param("backend.att.v", detail::fan_in_uniform(rng, {h, 1}, h));
  p.w_emb = make_param("backend.w_emb", detail::fan_in_uniform(rng, {2 * d.feature_dim, d.embed_dim},
                                                                2 * d.feature_dim));
  return p;
}

/// Ties key/value tensors so that both streams read and update one object.
inline MhfaParams apply_constraint(MhfaParams p, ConstraintMode mode) {
  if (mode == ConstraintMode::shared_weights || mode == ConstraintMode::shared_both) p.w_v = p.w_k;
  if (mode == ConstraintMode::shared_linear || mode == ConstraintMode::shared_both) p.s_v = p.s_k;
  return p;
}

/// MHFA embedding [1 x E] for a stack of L+1 [T x F] layers.
inline Var mhfa_forward(Graph& g, const MhfaParams& p, std::span<const Var> stack) {
  const std::size_t n_layers = p.w_k->value.size();
  const std::size_t F = p.s_k->value.rows();
  detail::check_stack(stack, n_layers, F);
  const std::size_t D = p.s_k->value.cols();
  const std::size_t H = p.q->value.cols();

  Var keys = matmul(weighted_layer_sum(stack, g.param(p.w_k)), g.param(p.s_k));    // T x D
  Var values = matmul(weighted_layer_sum(stack, g.param(p.w_v)), g.param(p.s_v));  // T x D
  Var att = softmax(matmul(keys, g.param(p.q)), 0);  // T x H, each column sums to 1
  Var pooled = matmul(transpose(att), values);       // H x D, row h = c_h
  Var c = reshape(pooled, {1, H * D});               // concat(c_1..c_H)
  return l2_normalize_rows(matmul(c, g.param(p.w_emb)));
}

/// Frame-attention matrix A [T x H] of an MHFA back-end (diagnostics/tests).
inline Tensor mhfa_attention(const MhfaParams& p, const LayerStack& s) {
  Graph g;
  std::vector<Var> stack;
  for (const Tensor& z : s.layers) stack.push_back(g.constant(z));
  detail::check_stack(stack, p.w_k->value.size(), p.s_k->value.rows());
  Var keys = matmul(weighted_layer_sum(stack, g.param(p.w_k)), g.param(p.s_k));
  return softmax(matmul(keys, g.param(p.q)), 0).value();
}

inline Var wavg_forward(Graph& g, const WavgParams& p, std::span<const Var> stack) {
  detail::check_stack(stack, p.w->value.size(), p.w_emb->value.rows());
  Var o = weighted_layer_sum(stack, g.param(p.w));
  return l2_normalize_rows(matmul(mean_rows(o), g.param(p.w_emb)));
}

inline Var topattn_forward(Graph& g, const TopAttnParams& p, std::span<const Var> stack) {
  if (stack.empty()) throw ShapeError("empty layer stack");
  detail::check_stack(stack, stack.size(), p.w1->value.rows());
  Var z = stack.back();  // T x F
  Var hidden = tanh(add_row(matmul(z, g.param(p.w1)), g.param(p.b1)));
  Var att = softmax(matmul(hidden, g.param(p.v)), 0);  // T x 1
  Var att_t = transpose(att);
  Var mean = matmul(att_t, z);               // 1 x F
  Var second = matmul(att_t, square(z));     // 1 x F
  Var var = sub(second, square(mean));
  Var sd = sqrt_clamped(var, 1e-9);
  return l2_normalize_rows(matmul(concat_cols({mean, sd}), g.param(p.w_emb)));
}

/// A back-end of one of the three kinds.
class Backend {
 public:
  Backend() = default;

  Backend(BackendKind kind, const BackendDims& dims, ConstraintMode mode, std::uint64_t seed)
      : kind_(kind), dims_(dims), mode_(mode) {
    dims_.validate();
    switch (kind) {
      case BackendKind::mhfa: params_ = apply_constraint(init_mhfa(dims_, seed), mode); break;
      case BackendKind::wavg: params_ = init_wavg(dims_, seed); break;
      case BackendKind::topattn: params_ = init_topattn(dims_, seed); break;
    }
  }

  BackendKind kind() const noexcept { return kind_; }
  ConstraintMode constraint() const noexcept { return mode_; }
  const BackendDims& dims() const noexcept { return dims_; }

  const MhfaParams& mhfa() const { return std::get<MhfaParams>(params_); }
  const WavgParams& wavg() const { return std::get<WavgParams>(params_); }
  const TopAttnParams& topattn() const { return std::get<TopAttnParams>(params_); }

  /// Embedding [1 x E] on graph `g`.
  Var forward(Graph& g, std::span<const Var> stack) const {
    switch (kind_) {
      case BackendKind::mhfa: return mhfa_forward(g, mhfa(), stack);
      case BackendKind::wavg: return wavg_forward(g, wavg(), stack);
      case BackendKind::topattn: break;
    }
    return topattn_forward(g, topattn(), stack);
  }

  SpeakerEmbedding embed(const LayerStack& s) const {
    s.validate();
    Graph g;
    std::vector<Var> stack;
    for (const Tensor& z : s.layers) stack.push_back(g.constant(z));
    const Tensor& e = forward(g, stack).value();
    return SpeakerEmbedding{Tensor({e.size()}, std::vector<double>(e.data().begin(), e.data().end()))};
  }

  /// Distinct trainable tensors; tied slots appear once.
  std::vector<Param> parameters() const {
    std::vector<Param> all;
    switch (kind_) {
      case BackendKind::mhfa: {
        const auto& p = mhfa();
        all = {p.w_k, p.w_v, p.s_k, p.s_v, p.q, p.w_emb};
        break;
      }
      case BackendKind::wavg: all = {wavg().w, wavg().w_emb}; break;
      case BackendKind::topattn: {
        const auto& p = topattn();
        all = {p.w1, p.b1, p.v, p.w_emb};
        break;
      }
    }
    std::vector<Param> out;
    std::set<const Parameter*> seen;
    for (const Param& q : all)
      if (seen.insert(q.get()).second) out.push_back(q);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Param& p : parameters()) n += p->value.size();
    return n;
  }

 private:
  BackendKind kind_ = BackendKind::mhfa;
  BackendDims dims_;
  ConstraintMode mode_ = ConstraintMode::none;
  std::variant<MhfaParams, WavgParams, TopAttnParams> params_;
};

/// Softmax-normalized layer weights for plotting. `key` is empty for wavg.
struct LayerWeightReport {
  std::vector<double> key;
  std::vector<double> value;
};

inline LayerWeightReport layer_weight_report(const Backend& b) {
  switch (b.kind()) {
    case BackendKind::mhfa:
      return {detail::softmax_values(b.mhfa().w_k->value.data()),
              detail::softmax_values(b.mhfa().w_v->value.data())};
    case BackendKind::wavg:
      return {{}, detail::softmax_values(b.wavg().w->value.data())};
    case BackendKind::topattn: break;
  }
  throw ConfigError("layer weight report is unsupported for the topattn back-end");
}

}  // namespace mhfa
