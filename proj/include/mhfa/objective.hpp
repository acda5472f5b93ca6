// mhfa/objective.hpp
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

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "mhfa/autograd.hpp"
#include "mhfa/encoder.hpp"
#include "mhfa/ops.hpp"

namespace mhfa {

struct AamConfig {
  double margin = 0.2;
  double scale = 30.0;
  std::size_t n_classes = 0;

  void validate() const {
    if (!(margin >= 0.0 && margin < std::numbers::pi / 2))
      throw ConfigError("aam margin must lie in [0, pi/2)");
    if (!(scale > 0.0)) throw ConfigError("aam scale must be positive");
  }

  friend bool operator==(const AamConfig&, const AamConfig&) = default;
};

/// Additive angular margin softmax over a batch of unit embeddings [B x E].
/// Class weight columns are normalized on every call.
inline Var aam_loss(const AamConfig& cfg, Var embeddings, Var class_weights,
                    const std::vector<std::size_t>& labels) {
  cfg.validate();
  if (class_weights.value().rank() != 2 ||
      class_weights.value().rows() != embeddings.value().cols())
    throw ShapeError("aam_loss: class weights " + shape_str(class_weights.shape()) +
                     " do not match embeddings " + shape_str(embeddings.shape()));
  Var cosines = matmul(embeddings, l2_normalize_cols(class_weights));  // B x C
  Var logits = scale(angular_margin(cosines, labels, cfg.margin), cfg.scale);
  return cross_entropy(logits, labels);
}

/// Fine-tuning regularizer sum_j (theta_j - theta_p_j)^2 over the trainable
/// encoder tensors. Only `params` receives gradient.
inline Var reg_loss(Graph& g, const PretrainedSnapshot& snapshot, const EncoderParams& params) {
  if (!params.config().same_architecture(snapshot.config()))
    throw ConfigError("reg_loss: encoder architecture differs from snapshot");
  Var total = g.constant(Tensor({1}));
  for (const Param& p : params.trainable())
    total = add(total, squared_distance(g.param(p), snapshot.at(p->name)));
  return total;
}

/// L = L_spk + lambda * L_p.
inline Var total_loss(Var spk, Var reg, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!spk.value().all_finite() || !reg.value().all_finite())
    throw NumericError("total_loss: non-finite loss term");
  return add(spk, scale(reg, lambda));
}

}  // namespace mhfa
