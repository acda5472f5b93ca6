// mhfa/model.hpp
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

// Everything a training run owns: encoder, its pre-trained snapshot, the
// back-end, the classifier weights and the optimizer state, plus their
// checkpoint form.

#pragma once

#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mhfa/checkpoint.hpp"
#include "mhfa/config.hpp"
#include "mhfa/encoder.hpp"
#include "mhfa/optim.hpp"
#include "mhfa/pooling.hpp"
#include "mhfa/pretrain.hpp"
#include "mhfa/synth.hpp"

namespace mhfa {

inline BackendDims backend_dims(const LabConfig& cfg) {
  return BackendDims{cfg.encoder.n_layers + 1, cfg.encoder.model_dim, cfg.train.compress_dim,
                     cfg.train.heads, cfg.train.embed_dim};
}

/// Number of distinct speakers; labels must be 0..n-1.
inline std::size_t count_classes(const Corpus& corpus) {
  std::set<std::size_t> ids;
  for (const auto& u : corpus) ids.insert(u.speaker_id);
  if (ids.empty()) throw ConfigError("training corpus is empty");
  if (*ids.rbegin() + 1 != ids.size())
    throw LabelError("training speaker ids must be contiguous from 0 (found " +
                     std::to_string(ids.size()) + " ids, max " + std::to_string(*ids.rbegin()) +
                     ")");
  return ids.size();
}

struct Model {
  LabConfig cfg;
  std::size_t n_classes = 0;
  EncoderParams encoder;
  std::shared_ptr<const PretrainedSnapshot> snapshot;
  Backend backend;
  Param class_weights;  // [E x C]
  Adam adam;
  std::size_t epochs_done = 0;

  /// Every tensor the optimizer may touch, in a fixed order.
  std::vector<Param> optimized() const {
    std::vector<Param> out;
    if (!cfg.train.optim.freeze_encoder)
      for (const Param& p : encoder.trainable()) out.push_back(p);
    for (const Param& p : backend.parameters()) out.push_back(p);
    out.push_back(class_weights);
    return out;
  }

  std::vector<ParamGroup> groups() const {
    std::vector<Param> head = backend.parameters();
    head.push_back(class_weights);
    return build_groups(encoder, head, cfg.train.optim);
  }

  SpeakerEmbedding embed(const Tensor& frames) const { return backend.embed(encode(encoder, frames)); }
};

namespace detail {

inline Tensor init_class_weights(std::size_t embed_dim, std::size_t n_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  return fan_in_uniform(rng, {embed_dim, n_classes}, embed_dim);
}

inline void apply_freeze(Model& m) {
  const bool train_encoder = !m.cfg.train.optim.freeze_encoder;
  for (const Param& p : m.encoder.trainable()) p->trainable = train_encoder;
}

}  // namespace detail

/// Fresh encoder after the masked-reconstruction warm-up.
inline std::pair<EncoderParams, std::shared_ptr<const PretrainedSnapshot>> pretrained_encoder(
    const LabConfig& cfg, const Corpus& train) {
  EncoderParams enc(cfg.encoder);
  auto snap = std::make_shared<const PretrainedSnapshot>(pretrain_warmup(enc, train, cfg.pretrain));
  return {std::move(enc), std::move(snap)};
}

/// Model ready for fine-tuning. `pretrained`, if given, replaces the warm-up
/// (it must come from the same encoder and pre-training settings).
inline Model init_model(LabConfig cfg, const Corpus& train,
                        std::shared_ptr<const PretrainedSnapshot> pretrained = nullptr) {
  cfg.resolve();
  Model m;
  m.n_classes = count_classes(train);
  if (pretrained) {
    if (!pretrained->config().same_architecture(cfg.encoder))
      throw ConfigError("pre-trained snapshot does not match the encoder architecture");
    m.snapshot = std::move(pretrained);
    m.encoder = m.snapshot->restore();
  } else {
    auto [enc, snap] = pretrained_encoder(cfg, train);
    m.encoder = std::move(enc);
    m.snapshot = std::move(snap);
  }
  m.backend = Backend(cfg.train.backend, backend_dims(cfg), cfg.train.constraint, cfg.train.seed);
  m.class_weights = make_param("aam.class_weights",
                               detail::init_class_weights(cfg.train.embed_dim, m.n_classes,
                                                          cfg.train.seed));
  m.cfg = std::move(cfg);
  m.cfg.train.aam.n_classes = m.n_classes;
  detail::apply_freeze(m);
  return m;
}

inline Checkpoint to_checkpoint(const Model& m) {
  Checkpoint c;
  c.set("config", to_json(m.cfg).dump());
  c.set("backend", to_string(m.cfg.train.backend));
  c.set("constraint", to_string(m.cfg.train.constraint));
  c.set("encoder.n_layers", std::to_string(m.cfg.encoder.n_layers));
  c.set("encoder.model_dim", std::to_string(m.cfg.encoder.model_dim));
  c.set("encoder.input_dim", std::to_string(m.cfg.encoder.input_dim));
  c.set("n_classes", std::to_string(m.n_classes));
  c.set("epochs_done", std::to_string(m.epochs_done));
  c.set("optim.t", std::to_string(m.adam.iteration()));
  for (const Param& p : m.encoder.all()) c.add(p->name, p->value);
  for (const Param& p : m.backend.parameters()) c.add(p->name, p->value);
  c.add(m.class_weights->name, m.class_weights->value);
  for (const auto& [name, t] : m.snapshot->tensors()) c.add("pretrained." + name, t);
  for (const Param& p : m.optimized()) {
    if (const auto* st = m.adam.find_state(*p)) {
      c.add("optim.m." + p->name, st->m);
      c.add("optim.v." + p->name, st->v);
    }
  }
  return c;
}

inline Model from_checkpoint(const Checkpoint& c) {
  LabConfig cfg;
  try {
    cfg = lab_config_from_json(Json::parse(c.get("config")));
  } catch (const Json::parse_error& e) {
    throw IoError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  if (c.get("backend") != to_string(cfg.train.backend) ||
      c.get("constraint") != to_string(cfg.train.constraint))
    throw ConsistencyError("checkpoint manifest disagrees with its stored config");

  auto load_into = [&c](const Param& p) {
    const Tensor& t = c.tensor(p->name);
    if (t.shape() != p->value.shape())
      throw ConsistencyError("checkpoint tensor '" + p->name + "' has shape " +
                             shape_str(t.shape()) + ", expected " + shape_str(p->value.shape()));
    p->value = t;
  };

  Model m;
  m.n_classes = static_cast<std::size_t>(std::stoull(c.get("n_classes")));
  m.epochs_done = static_cast<std::size_t>(std::stoull(c.get("epochs_done")));
  m.encoder = EncoderParams(cfg.encoder);
  for (const Param& p : m.encoder.all()) load_into(p);
  std::vector<std::pair<std::string, Tensor>> snap;
  for (const Param& p : m.encoder.all()) snap.emplace_back(p->name, c.tensor("pretrained." + p->name));
  m.snapshot = std::make_shared<const PretrainedSnapshot>(cfg.encoder, std::move(snap));
  m.backend = Backend(cfg.train.backend, backend_dims(cfg), cfg.train.constraint, cfg.train.seed);
  for (const Param& p : m.backend.parameters()) load_into(p);
  m.class_weights = make_param("aam.class_weights", Tensor({cfg.train.embed_dim, m.n_classes}));
  load_into(m.class_weights);
  m.cfg = std::move(cfg);
  m.cfg.train.aam.n_classes = m.n_classes;
  detail::apply_freeze(m);
  m.adam.set_iteration(std::stol(c.get("optim.t")));
  for (const Param& p : m.optimized()) {
    if (!c.has_tensor("optim.m." + p->name)) continue;
    auto& st = m.adam.state(*p);
    st.m = c.tensor("optim.m." + p->name);
    st.v = c.tensor("optim.v." + p->name);
  }
  return m;
}

/// Content hash of a checkpoint, as 16 hex digits.
inline std::string checkpoint_hash(const Checkpoint& c) { return hex64(fnv1a(c.serialize())); }

}  // namespace mhfa
