// mhfa/pretrain.hpp
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

// Masked-frame reconstruction warm-up. A fraction of the frames of Z_0 have
// their content replaced by zeros (the position code stays); a linear head
// on Z_L must reconstruct the clean Z_0 at the masked frames.

#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "mhfa/config.hpp"
#include "mhfa/encoder.hpp"
#include "mhfa/optim.hpp"
#include "mhfa/synth.hpp"

namespace mhfa {

/// Picks round(fraction * T) frames (at least one) to mask.
inline std::vector<std::size_t> draw_mask(std::size_t frames, double fraction, std::mt19937_64& rng) {
  std::size_t n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(frames)));
  n = std::clamp<std::size_t>(n, 1, frames);
  std::vector<std::size_t> idx(frames);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Mean squared reconstruction error over the masked frames.
inline Var reconstruction_loss(Graph& g, const EncoderParams& p, const Param& head,
                               const Tensor& frames, const std::vector<std::size_t>& masked) {
  const std::size_t T = frames.rows(), F = p.config().model_dim;
  const Tensor content = frontend(g, p, frames).value();
  const Tensor pos = position_code(T, F, p.config().position_scale);
  Tensor clean = content;
  clean += pos;
  Tensor input = clean;
  Tensor select({T, F});
  for (std::size_t t : masked)
    for (std::size_t j = 0; j < F; ++j) {
      input(t, j) = pos(t, j);
      select(t, j) = 1.0;
    }
  const auto stack = run_blocks(g, p, g.constant(input));
  Var pred = matmul(stack.back(), g.param(head));
  Var err = mul(sub(pred, g.constant(clean)), g.constant(select));
  return scale(sum_all(square(err)), 1.0 / static_cast<double>(masked.size() * F));
}

/// Reconstruction head, a square [F x F] map starting at identity.
inline Param make_reconstruction_head(const EncoderConfig& cfg) {
  return make_param("pretrain.head", Tensor::identity(cfg.model_dim));
}

/// Runs `cfg.steps` Adam steps on `params` over random batches of `corpus`
/// and returns the snapshot of the result. steps == 0 leaves the parameters
/// at their initialization.
inline PretrainedSnapshot pretrain_warmup(EncoderParams& params, const Corpus& corpus,
                                          const PretrainConfig& cfg,
                                          Param head = nullptr) {
  if (cfg.steps > 0 && corpus.empty()) throw ConfigError("pretrain needs a non-empty corpus");
  if (cfg.steps > 0 && (cfg.batch_size < 1 || !(cfg.lr > 0.0) ||
                        !(cfg.mask_fraction > 0.0 && cfg.mask_fraction <= 1.0)))
    throw ConfigError("pretrain: batch_size, lr and mask_fraction must be positive");
  if (!head) head = make_reconstruction_head(params.config());
  std::vector<Param> members = params.trainable();
  members.push_back(head);
  std::vector<ParamGroup> groups{ParamGroup{"pretrain", members, cfg.lr, cfg.lr, 0}};
  Adam adam;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.empty() ? 0 : corpus.size() - 1);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const Utterance& u = corpus[pick(rng)];
      const auto mask = draw_mask(u.frames.rows(), cfg.mask_fraction, rng);
      Graph g;
      Var loss = scale(reconstruction_loss(g, params, head, u.frames, mask),
                       1.0 / static_cast<double>(cfg.batch_size));
      if (!loss.value().all_finite())
        throw DivergenceError("pretrain loss is not finite", static_cast<long>(step));
      g.backward(loss);
    }
    adam.step(groups, 5.0);
  }
  return PretrainedSnapshot(params);
}

/// Average reconstruction loss over `corpus` with masks drawn from `seed`.
inline double reconstruction_score(const EncoderParams& params, const Param& head,
                                   const Corpus& corpus, double mask_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (const Utterance& u : corpus) {
    Graph g;
    total += reconstruction_loss(g, params, head, u.frames,
                                 draw_mask(u.frames.rows(), mask_fraction, rng))
                 .value()[0];
  }
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

}  // namespace mhfa
