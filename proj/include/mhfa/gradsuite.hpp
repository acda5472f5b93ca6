// mhfa/gradsuite.hpp
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

// Finite-difference suite over every differentiable component at small
// dimensions: L=3 (4 stack entries), T=5, F=8, D=4, H=2, E=6, B=4, C=5.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "mhfa/encoder.hpp"
#include "mhfa/gradcheck.hpp"
#include "mhfa/objective.hpp"
#include "mhfa/ops.hpp"
#include "mhfa/pooling.hpp"

namespace mhfa {

struct GradSuiteEntry {
  std::string component;
  GradCheckResult result;
};

struct GradSuiteDims {
  std::size_t L = 3, T = 5, F = 8, D = 4, H = 2, E = 6, B = 4, C = 5;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

inline Tensor normal_tensor(std::mt19937_64& rng, Shape s, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t(std::move(s));
  for (double& v : t.storage()) v = n(rng);
  return t;
}

/// B random stacks of L+1 [T x F] layers.
inline std::vector<std::vector<Tensor>> random_stacks(std::mt19937_64& rng, const GradSuiteDims& d) {
  std::vector<std::vector<Tensor>> out(d.B);
  for (auto& s : out)
    for (std::size_t l = 0; l <= d.L; ++l) s.push_back(normal_tensor(rng, {d.T, d.F}));
  return out;
}

/// sum_b <embedding_b, r_b> for a back-end over the given stacks.
inline ScalarFn backend_probe(const Backend& b, const std::vector<std::vector<Tensor>>& stacks,
                              const Tensor& probe) {
  return [&b, &stacks, probe](Graph& g) {
    std::vector<Var> rows;
    for (const auto& s : stacks) {
      std::vector<Var> vs;
      for (const Tensor& z : s) vs.push_back(g.constant(z));
      rows.push_back(b.forward(g, vs));
    }
    return sum_all(mul(concat_rows(rows), g.constant(probe)));
  };
}

/// Perturbs every parameter away from its initial, often structured, value.
inline void jitter(const std::vector<Param>& ps, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (const Param& p : ps)
    for (double& v : p->value.storage()) v += n(rng);
}

}  // namespace detail

/// Runs every component; `inject_fault` corrupts one analytic gradient
/// entry of the first component.
inline std::vector<GradSuiteEntry> run_grad_suite(bool inject_fault = false, std::uint64_t seed = 5,
                                                  const GradSuiteDims& d = {}) {
  std::mt19937_64 rng(seed);
  std::vector<GradSuiteEntry> out;

  {  // tensor-core: a composite touching every primitive
    std::vector<Param> layers;
    for (std::size_t l = 0; l <= d.L; ++l)
      layers.push_back(make_param("z" + std::to_string(l), detail::normal_tensor(rng, {d.T, d.F})));
    Param w = make_param("w", detail::normal_tensor(rng, {d.L + 1}));
    Param gain = make_param("gain", detail::normal_tensor(rng, {d.F}));
    Param bias = make_param("bias", detail::normal_tensor(rng, {d.F}));
    Param proj = make_param("proj", detail::normal_tensor(rng, {d.F, d.D}, 0.5));
    const Tensor probe = detail::normal_tensor(rng, {1, d.D + 2});
    const Tensor target = detail::normal_tensor(rng, {d.T, d.D});
    ScalarFn f = [&](Graph& g) {
      std::vector<Var> zs;
      for (const Param& p : layers) zs.push_back(g.param(p));
      Var s = weighted_layer_sum(zs, g.param(w));
      Var a = add_row(mul_row(layer_norm_rows(s), g.param(gain)), g.param(bias));
      Var h = gelu(matmul(a, g.param(proj)));                 // T x D
      Var t = tanh(h);
      Var c = concat_cols({softmax(t, 0), slice_cols(softmax(t, 1), 0, 2)});  // T x (D+2)
      Var r = transpose(reshape(transpose(c), {d.T, d.D + 2}));  // (D+2) x T
      Var n = add(l2_normalize_rows(transpose(r)), l2_normalize_cols(transpose(r)));
      Var q = sqrt_clamped(add(square(n), g.constant(Tensor({d.T, d.D + 2}, 0.1))), 1e-9);
      Var m = mean_rows(concat_rows({n, q, sub(n, q)}));
      Var fit = squared_distance(h, target);
      return add(sum_all(mul(m, g.constant(probe))), scale(fit, 0.1));
    };
    std::vector<Param> ps = layers;
    for (const Param& p : {w, gain, bias, proj}) ps.push_back(p);
    out.push_back({"tensor-core", grad_check(f, ps, 1e-5, inject_fault)});
  }

  const auto stacks = detail::random_stacks(rng, d);
  const BackendDims bd{d.L + 1, d.F, d.D, d.H, d.E};
  for (BackendKind kind : {BackendKind::topattn, BackendKind::wavg, BackendKind::mhfa}) {
    Backend b(kind, bd, ConstraintMode::none, seed + 1);
    detail::jitter(b.parameters(), rng, 0.3);
    const Tensor probe = detail::normal_tensor(rng, {d.B, d.E});
    out.push_back({to_string(kind), grad_check(detail::backend_probe(b, stacks, probe),
                                               b.parameters())});
  }

  {  // aam: unit embeddings from free rows, margin 0.2, scale 30
    Param x = make_param("embeddings", detail::normal_tensor(rng, {d.B, d.E}));
    Param cw = make_param("class_weights", detail::normal_tensor(rng, {d.E, d.C}));
    // Each row is labelled with its least similar class. A row whose target
    // already wins by a wide margin has gradients near exp(-30 * gap), below
    // what central differences resolve in double precision; the wider step
    // keeps the remaining small entries above rounding.
    std::vector<std::size_t> labels;
    {
      Graph g;
      const Tensor cos =
          matmul(l2_normalize_rows(g.constant(x->value)), l2_normalize_cols(g.constant(cw->value)))
              .value();
      for (std::size_t b = 0; b < d.B; ++b) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < d.C; ++c)
          if (cos(b, c) < cos(b, arg)) arg = c;
        labels.push_back(arg);
      }
    }
    const AamConfig cfg{0.2, 30.0, d.C};
    ScalarFn f = [&](Graph& g) {
      return aam_loss(cfg, l2_normalize_rows(g.param(x)), g.param(cw), labels);
    };
    out.push_back({"aam", grad_check(f, {x, cw}, 1e-4)});
  }

  {  // reg: encoder of L layers, F wide, pulled towards its own snapshot
    EncoderConfig ec;
    ec.input_dim = d.F;
    ec.n_layers = d.L;
    ec.model_dim = d.F;
    ec.n_attn_heads = 2;
    ec.ffn_dim = 2 * d.F;
    ec.seed = seed + 2;
    EncoderParams enc(ec);
    const PretrainedSnapshot snap(enc);
    detail::jitter(enc.trainable(), rng, 0.1);
    ScalarFn f = [&](Graph& g) { return reg_loss(g, snap, enc); };
    out.push_back({"reg", grad_check(f, enc.trainable())});
  }
  return out;
}

}  // namespace mhfa
