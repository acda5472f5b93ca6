// mhfa/encoder.hpp
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

// Toy transformer encoder: a frozen linear front-end followed by L pre-norm
// blocks. encode() returns every intermediate representation Z_0..Z_L.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mhfa/autograd.hpp"
#include "mhfa/ops.hpp"

namespace mhfa {

struct EncoderConfig {
  std::size_t input_dim = 16;  // F0, must match the corpus frame_dim
  std::size_t n_layers = 4;
  std::size_t model_dim = 32;
  std::size_t n_attn_heads = 2;
  std::size_t ffn_dim = 64;
  double position_scale = 0.1;  // amplitude of the sinusoidal position code
  std::uint64_t seed = 7;

  void validate() const {
    if (n_layers < 1) throw ConfigError("encoder.n_layers must be >= 1");
    if (input_dim < 1 || model_dim < 1 || ffn_dim < 1)
      throw ConfigError("encoder dimensions must be positive");
    if (n_attn_heads < 1 || model_dim % n_attn_heads != 0)
      throw ConfigError("encoder.model_dim (" + std::to_string(model_dim) +
                        ") must be divisible by encoder.n_attn_heads (" +
                        std::to_string(n_attn_heads) + ")");
  }

  bool same_architecture(const EncoderConfig& o) const {
    return input_dim == o.input_dim && n_layers == o.n_layers && model_dim == o.model_dim &&
           n_attn_heads == o.n_attn_heads && ffn_dim == o.ffn_dim;
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Per-frame representations of one utterance, one [T x F] tensor per layer.
struct LayerStack {
  std::vector<Tensor> layers;

  std::size_t n_layers() const { return layers.size(); }
  std::size_t frames() const { return layers.empty() ? 0 : layers[0].rows(); }
  std::size_t dim() const { return layers.empty() ? 0 : layers[0].cols(); }

  void validate() const {
    if (layers.empty()) throw ShapeError("empty layer stack");
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].rank() != 2 || layers[l].shape() != layers[0].shape())
        throw ShapeError("ragged layer stack: layer " + std::to_string(l) + " is " +
                         shape_str(layers[l].shape()) + ", layer 0 is " +
                         shape_str(layers[0].shape()));
  }
};

struct EncoderBlock {
  Param ln1_gain, ln1_bias;
  Param wq, wk, wv, wo, bo;
  Param ln2_gain, ln2_bias;
  Param w1, b1, w2, b2;

  std::vector<Param> params() const {
    return {ln1_gain, ln1_bias, wq, wk, wv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2};
  }
};

class EncoderParams {
 public:
  EncoderParams() = default;

  /// Random initialization from cfg.seed.
  explicit EncoderParams(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t F = cfg_.model_dim;
    auto uniform = [&rng](Shape s, std::size_t fan_in) {
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> d(-a, a);
      Tensor t(std::move(s));
      for (double& v : t.storage()) v = d(rng);
      return t;
    };
    frontend_ = make_param("frontend.proj", uniform({cfg_.input_dim, F}, cfg_.input_dim),
                           /*trainable=*/false);
    for (std::size_t l = 1; l <= cfg_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      EncoderBlock b;
      b.ln1_gain = make_param(p + "ln1.gain", Tensor({F}, 1.0));
      b.ln1_bias = make_param(p + "ln1.bias", Tensor({F}));
      b.wq = make_param(p + "attn.wq", uniform({F, F}, F));
      b.wk = make_param(p + "attn.wk", uniform({F, F}, F));
      b.wv = make_param(p + "attn.wv", uniform({F, F}, F));
      b.wo = make_param(p + "attn.wo", uniform({F, F}, F));
      b.bo = make_param(p + "attn.bo", Tensor({F}));
      b.ln2_gain = make_param(p + "ln2.gain", Tensor({F}, 1.0));
      b.ln2_bias = make_param(p + "ln2.bias", Tensor({F}));
      b.w1 = make_param(p + "ffn.w1", uniform({F, cfg_.ffn_dim}, F));
      b.b1 = make_param(p + "ffn.b1", Tensor({cfg_.ffn_dim}));
      b.w2 = make_param(p + "ffn.w2", uniform({cfg_.ffn_dim, F}, cfg_.ffn_dim));
      b.b2 = make_param(p + "ffn.b2", Tensor({F}));
      blocks_.push_back(std::move(b));
    }
  }

  const EncoderConfig& config() const noexcept { return cfg_; }
  const Param& frontend() const noexcept { return frontend_; }
  const std::vector<EncoderBlock>& blocks() const noexcept { return blocks_; }

  /// Parameters of transformer layer l, 1-based.
  std::vector<Param> layer_params(std::size_t l) const {
    if (l < 1 || l > blocks_.size())
      throw ConfigError("encoder layer index " + std::to_string(l) + " out of range");
    return blocks_[l - 1].params();
  }

  /// Trainable tensors (every block parameter), in layer order.
  std::vector<Param> trainable() const {
    std::vector<Param> out;
    for (const auto& b : blocks_)
      for (auto& p : b.params()) out.push_back(p);
    return out;
  }

  /// Frozen front-end first, then the trainable tensors.
  std::vector<Param> all() const {
    std::vector<Param> out{frontend_};
    for (auto& p : trainable()) out.push_back(p);
    return out;
  }

  /// Independent copy: no tensor is shared with the source.
  EncoderParams deep_copy() const {
    EncoderParams c;
    c.cfg_ = cfg_;
    c.frontend_ = clone_param(*frontend_);
    for (const auto& b : blocks_) {
      EncoderBlock nb;
      auto src = b.params();
      std::vector<Param*> dst{&nb.ln1_gain, &nb.ln1_bias, &nb.wq, &nb.wk, &nb.wv,
                              &nb.wo,       &nb.bo,       &nb.ln2_gain, &nb.ln2_bias,
                              &nb.w1,       &nb.b1,       &nb.w2, &nb.b2};
      for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = clone_param(*src[i]);
      c.blocks_.push_back(std::move(nb));
    }
    return c;
  }

 private:
  EncoderConfig cfg_;
  Param frontend_;
  std::vector<EncoderBlock> blocks_;
};

/// Immutable record of encoder parameter values, keyed by parameter name.
class PretrainedSnapshot {
 public:
  explicit PretrainedSnapshot(const EncoderParams& p) : cfg_(p.config()) {
    for (const Param& q : p.all()) tensors_.emplace_back(q->name, q->value);
  }

  /// Rebuilds a snapshot from stored tensors; every parameter of the
  /// architecture must be present with its shape.
  PretrainedSnapshot(const EncoderConfig& cfg, std::vector<std::pair<std::string, Tensor>> tensors)
      : cfg_(cfg), tensors_(std::move(tensors)) {
    const EncoderParams ref(cfg_);
    for (const Param& q : ref.all())
      if (at(q->name).shape() != q->value.shape())
        throw ConsistencyError("snapshot tensor '" + q->name + "' has shape " +
                               shape_str(at(q->name).shape()) + ", expected " +
                               shape_str(q->value.shape()));
  }

  const EncoderConfig& config() const noexcept { return cfg_; }
  const std::vector<std::pair<std::string, Tensor>>& tensors() const noexcept {
    return tensors_;
  }

  const Tensor& at(const std::string& name) const {
    for (const auto& [n, t] : tensors_)
      if (n == name) return t;
    throw ConfigError("snapshot has no parameter '" + name + "'");
  }

  /// Encoder parameters carrying the snapshot values.
  EncoderParams restore() const {
    EncoderParams p(cfg_);
    for (const Param& q : p.all()) q->value = at(q->name);
    return p;
  }

 private:
  EncoderConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

/// Sinusoidal position code [T x F], amplitude `scale`.
inline Tensor position_code(std::size_t frames, std::size_t dim, double scale) {
  Tensor pe({frames, dim});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(t, i) = scale * (i % 2 == 0 ? std::sin(t * rate) : std::cos(t * rate));
    }
  return pe;
}

/// One pre-norm block: x + MHSA(LN(x)), then + FFN(LN(.)).
inline Var encoder_block(Graph& g, const EncoderBlock& b, const EncoderConfig& cfg, Var x) {
  const std::size_t H = cfg.n_attn_heads;
  const std::size_t dh = cfg.model_dim / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Var h = add_row(mul_row(layer_norm_rows(x), g.param(b.ln1_gain)), g.param(b.ln1_bias));
  Var q = matmul(h, g.param(b.wq));
  Var k = matmul(h, g.param(b.wk));
  Var v = matmul(h, g.param(b.wv));
  std::vector<Var> heads;
  heads.reserve(H);
  for (std::size_t i = 0; i < H; ++i) {
    Var qi = slice_cols(q, i * dh, dh);
    Var ki = slice_cols(k, i * dh, dh);
    Var vi = slice_cols(v, i * dh, dh);
    Var att = softmax(scale(matmul(qi, transpose(ki)), inv_sqrt), 1);
    heads.push_back(matmul(att, vi));
  }
  Var attn = add_row(matmul(H == 1 ? heads[0] : concat_cols(heads), g.param(b.wo)),
                     g.param(b.bo));
  x = add(x, attn);

  Var h2 = add_row(mul_row(layer_norm_rows(x), g.param(b.ln2_gain)), g.param(b.ln2_bias));
  Var f = add_row(matmul(gelu(add_row(matmul(h2, g.param(b.w1)), g.param(b.b1))),
                         g.param(b.w2)),
                  g.param(b.b2));
  return add(x, f);
}

/// Runs the blocks over a prepared layer-0 input; returns {Z_0, ..., Z_L}.
inline std::vector<Var> run_blocks(Graph& g, const EncoderParams& p, Var z0) {
  std::vector<Var> stack{z0};
  stack.reserve(p.blocks().size() + 1);
  for (const auto& b : p.blocks()) stack.push_back(encoder_block(g, b, p.config(), stack.back()));
  return stack;
}

/// Layer-0 content: frames through the frozen front-end.
inline Var frontend(Graph& g, const EncoderParams& p, const Tensor& frames) {
  if (frames.rank() != 2 || frames.cols() != p.config().input_dim)
    throw ShapeError("encoder expects frames [T x " + std::to_string(p.config().input_dim) +
                     "], got " + shape_str(frames.shape()));
  if (!frames.all_finite()) throw NumericError("encoder input frames are not finite");
  return matmul(g.constant(frames), g.param(p.frontend()));
}

/// Z_0 = frames * W_frozen + position code; Z_l = Block_l(Z_{l-1}).
inline std::vector<Var> encode(Graph& g, const EncoderParams& p, const Tensor& frames) {
  Var content = frontend(g, p, frames);
  Var z0 = add(content, g.constant(position_code(frames.rows(), p.config().model_dim,
                                                 p.config().position_scale)));
  return run_blocks(g, p, z0);
}

/// Value-only encode.
inline LayerStack encode(const EncoderParams& p, const Tensor& frames) {
  Graph g;
  LayerStack s;
  for (const Var& z : encode(g, p, frames)) s.layers.push_back(z.value());
  return s;
}

/// Per-layer squared distance sum_j (theta_j - theta_p_j)^2, index 0 = layer 1.
inline std::vector<double> layer_drift(const EncoderParams& params,
                                       const PretrainedSnapshot& snapshot) {
  if (!params.config().same_architecture(snapshot.config()))
    throw ConfigError("layer_drift: encoder architecture differs from snapshot");
  std::vector<double> drift;
  for (std::size_t l = 1; l <= params.config().n_layers; ++l) {
    double s = 0.0;
    for (const Param& q : params.layer_params(l)) {
      const Tensor& ref = snapshot.at(q->name);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = q->value[i] - ref[i];
        s += d * d;
      }
    }
    drift.push_back(s);
  }
  return drift;
}

}  // namespace mhfa
