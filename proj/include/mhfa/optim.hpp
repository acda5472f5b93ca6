// mhfa/optim.hpp
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

// Per-group Adam updates. Encoder layer l trains at lr_encoder * xi^(l-1);
// the back-end has its own rate; every rate decays per epoch.

#pragma once

#include <cmath>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mhfa/autograd.hpp"
#include "mhfa/encoder.hpp"

namespace mhfa {

struct LlrdConfig {
  double lr_backend = 1e-3;
  double lr_encoder = 2e-5;  // LR_1, rate of the bottom transformer layer
  double xi = 1.0;
  double epoch_decay = 0.95;
  bool freeze_encoder = false;
  double clip_norm = 5.0;  // global gradient-norm cap; <= 0 disables

  void validate() const {
    if (!(lr_backend > 0.0)) throw ConfigError("optim.lr_backend must be positive");
    if (!(lr_encoder > 0.0)) throw ConfigError("optim.lr_encoder must be positive");
    if (!(xi > 0.0)) throw ConfigError("optim.xi must be positive");
    if (!(epoch_decay > 0.0)) throw ConfigError("optim.epoch_decay must be positive");
  }

  friend bool operator==(const LlrdConfig&, const LlrdConfig&) = default;
};

struct ParamGroup {
  std::string id;
  std::vector<Param> params;
  double base_lr = 0.0;  // rate at epoch 0
  double lr = 0.0;       // current rate
  std::size_t ticks = 0;
};

/// Encoder layer l -> group "encoder.layer<l>" at LR_1 * xi^(l-1), then a
/// "backend" group. The frozen front-end never joins a group; with
/// freeze_encoder no encoder group is built at all.
inline std::vector<ParamGroup> build_groups(const EncoderParams& encoder,
                                            const std::vector<Param>& backend,
                                            const LlrdConfig& cfg) {
  cfg.validate();
  std::vector<ParamGroup> groups;
  if (!cfg.freeze_encoder) {
    for (std::size_t l = 1; l <= encoder.config().n_layers; ++l) {
      const double rate = cfg.lr_encoder * std::pow(cfg.xi, static_cast<double>(l - 1));
      groups.push_back(
          ParamGroup{"encoder.layer" + std::to_string(l), encoder.layer_params(l), rate, rate, 0});
    }
  }
  groups.push_back(ParamGroup{"backend", backend, cfg.lr_backend, cfg.lr_backend, 0});

  std::set<const Parameter*> seen;
  for (const auto& g : groups)
    for (const Param& p : g.params)
      if (!seen.insert(p.get()).second)
        throw ConsistencyError("parameter '" + p->name + "' belongs to more than one group");
  return groups;
}

/// Multiplies every group's rate by the epoch decay. Rates are recomputed
/// from the base rate so that after k ticks rate == base * decay^k.
inline void epoch_tick(std::vector<ParamGroup>& groups, const LlrdConfig& cfg) {
  for (auto& g : groups) {
    ++g.ticks;
    g.lr = g.base_lr * std::pow(cfg.epoch_decay, static_cast<double>(g.ticks));
  }
}

class Adam {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  /// One update of every group member, then clears their gradients.
  /// Throws ConsistencyError if a member has no gradient.
  void step(std::vector<ParamGroup>& groups, double clip_norm = 0.0) {
    double sq = 0.0;
    for (const auto& g : groups)
      for (const Param& p : g.params) {
        if (!p->has_grad())
          throw ConsistencyError("trainable tensor '" + p->name + "' has no gradient");
        for (double x : p->grad.data()) sq += x * x;
      }
    const double norm = std::sqrt(sq);
    const double clip = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    last_grad_norm_ = norm;

    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (auto& g : groups) {
      for (const Param& p : g.params) {
        Moments& st = state(*p);
        auto x = p->value.data();
        auto gr = p->grad.data();
        auto m = st.m.data();
        auto v = st.v.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double gi = gr[i] * clip;
          m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
          v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
          x[i] -= g.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
        }
      }
    }
    for (auto& g : groups)
      for (const Param& p : g.params) p->zero_grad();
  }

  long iteration() const noexcept { return t_; }
  void set_iteration(long t) noexcept { t_ = t; }
  double last_grad_norm() const noexcept { return last_grad_norm_; }

  Moments& state(const Parameter& p) {
    auto it = moments_.find(&p);
    if (it == moments_.end())
      it = moments_.emplace(&p, Moments{Tensor::zeros(p.value.shape()),
                                        Tensor::zeros(p.value.shape())}).first;
    return it->second;
  }

  bool has_state(const Parameter& p) const { return moments_.count(&p) != 0; }

  const Moments* find_state(const Parameter& p) const {
    auto it = moments_.find(&p);
    return it == moments_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<const Parameter*, Moments> moments_;
  long t_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace mhfa
