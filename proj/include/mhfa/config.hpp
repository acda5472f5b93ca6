// mhfa/config.hpp
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

// Experiment configuration and its JSON form. Every field has a default;
// unknown keys are rejected with their full dotted path.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mhfa/encoder.hpp"
#include "mhfa/objective.hpp"
#include "mhfa/optim.hpp"
#include "mhfa/pooling.hpp"
#include "mhfa/synth.hpp"

namespace mhfa {

using Json = nlohmann::ordered_json;

/// Corpus layout beyond the generator itself.
struct DataConfig {
  std::size_t utts_per_speaker = 10;
  std::size_t eval_speakers = 10;  // held out, never seen in training
  std::size_t n_target_trials = 500;
  std::size_t n_nontarget_trials = 500;
  std::uint64_t trial_seed = 3;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Masked-frame reconstruction warm-up that produces the pre-trained snapshot.
struct PretrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double mask_fraction = 0.15;
  std::uint64_t seed = 11;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

/// Large-margin fine-tuning phase appended after the main epochs.
struct LmftConfig {
  bool enabled = false;
  std::size_t epochs = 3;
  double margin = 0.5;
  std::size_t segment_frames = 36;

  friend bool operator==(const LmftConfig&, const LmftConfig&) = default;
};

struct TrainConfig {
  BackendKind backend = BackendKind::mhfa;
  ConstraintMode constraint = ConstraintMode::none;
  std::size_t compress_dim = 16;  // D
  std::size_t heads = 8;          // H
  std::size_t embed_dim = 32;     // E
  AamConfig aam{0.2, 30.0, 0};    // n_classes comes from the training corpus
  double lambda = 1e-4;
  LlrdConfig optim;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t segment_frames = 24;
  LmftConfig lmft;
  std::uint64_t seed = 1;  // shuffling, crops and back-end init

  void validate() const {
    if (compress_dim < 1 || heads < 1 || embed_dim < 1)
      throw ConfigError("train back-end dimensions must be positive");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (segment_frames < 1) throw ConfigError("train.segment_frames must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be non-negative");
    AamConfig a = aam;
    a.validate();
    a.margin = lmft.margin;
    if (lmft.enabled) a.validate();
    if (lmft.enabled && lmft.segment_frames < 1)
      throw ConfigError("train.lmft.segment_frames must be >= 1");
    optim.validate();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LabConfig {
  SynthConfig synth;
  DataConfig data;
  EncoderConfig encoder;  // input_dim always follows synth.frame_dim
  PretrainConfig pretrain;
  TrainConfig train;

  /// Applies derived fields and checks cross-section consistency.
  void resolve() {
    encoder.input_dim = synth.frame_dim;
    synth.validate();
    encoder.validate();
    train.validate();
    if (data.utts_per_speaker < 1) throw ConfigError("data.utts_per_speaker must be >= 1");
    if (data.eval_speakers >= synth.n_speakers)
      throw ConfigError("data.eval_speakers must be smaller than synth.n_speakers");
    if (synth.n_speakers - data.eval_speakers < 2)
      throw ConfigError("need at least two training speakers");
  }

  std::size_t train_speakers() const { return synth.n_speakers - data.eval_speakers; }

  friend bool operator==(const LabConfig&, const LabConfig&) = default;
};

inline Json to_json(const LabConfig& c) {
  Json j;
  j["synth"] = {{"n_speakers", c.synth.n_speakers},
                {"n_phones", c.synth.n_phones},
                {"frame_dim", c.synth.frame_dim},
                {"frames_per_utt", c.synth.frames_per_utt},
                {"speaker_scale", c.synth.speaker_scale},
                {"phone_scale", c.synth.phone_scale},
                {"noise_scale", c.synth.noise_scale},
                {"phone_stay_prob", c.synth.phone_stay_prob},
                {"seed", c.synth.seed}};
  j["data"] = {{"utts_per_speaker", c.data.utts_per_speaker},
               {"eval_speakers", c.data.eval_speakers},
               {"n_target_trials", c.data.n_target_trials},
               {"n_nontarget_trials", c.data.n_nontarget_trials},
               {"trial_seed", c.data.trial_seed}};
  j["encoder"] = {{"n_layers", c.encoder.n_layers},
                  {"model_dim", c.encoder.model_dim},
                  {"n_attn_heads", c.encoder.n_attn_heads},
                  {"ffn_dim", c.encoder.ffn_dim},
                  {"position_scale", c.encoder.position_scale},
                  {"seed", c.encoder.seed}};
  j["pretrain"] = {{"steps", c.pretrain.steps},
                   {"batch_size", c.pretrain.batch_size},
                   {"lr", c.pretrain.lr},
                   {"mask_fraction", c.pretrain.mask_fraction},
                   {"seed", c.pretrain.seed}};
  const TrainConfig& t = c.train;
  j["train"] = {{"backend", to_string(t.backend)},
                {"constraint", to_string(t.constraint)},
                {"compress_dim", t.compress_dim},
                {"heads", t.heads},
                {"embed_dim", t.embed_dim},
                {"aam_margin", t.aam.margin},
                {"aam_scale", t.aam.scale},
                {"lambda", t.lambda},
                {"lr_backend", t.optim.lr_backend},
                {"lr_encoder", t.optim.lr_encoder},
                {"xi", t.optim.xi},
                {"epoch_decay", t.optim.epoch_decay},
                {"freeze_encoder", t.optim.freeze_encoder},
                {"clip_norm", t.optim.clip_norm},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"segment_frames", t.segment_frames},
                {"lmft",
                 {{"enabled", t.lmft.enabled},
                  {"epochs", t.lmft.epochs},
                  {"margin", t.lmft.margin},
                  {"segment_frames", t.lmft.segment_frames}}},
                {"seed", t.seed}};
  return j;
}

namespace detail {

class JsonReader {
 public:
  JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  ~JsonReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + full(it.key()) + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer() || (it->is_number_integer() && it->template get<long long>() < 0))
          throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + full(key) + "' has an invalid value: " + it->dump());
    }
  }

  JsonReader section(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const Json empty = Json::object();
    return JsonReader(it == j_.end() ? empty : *it, full(key));
  }

  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Parses a config document; absent fields keep their defaults.
inline LabConfig lab_config_from_json(const Json& j) {
  LabConfig c;
  {
    detail::JsonReader root(j, "");
    {
      auto s = root.section("synth");
      s.get("n_speakers", c.synth.n_speakers);
      s.get("n_phones", c.synth.n_phones);
      s.get("frame_dim", c.synth.frame_dim);
      s.get("frames_per_utt", c.synth.frames_per_utt);
      s.get("speaker_scale", c.synth.speaker_scale);
      s.get("phone_scale", c.synth.phone_scale);
      s.get("noise_scale", c.synth.noise_scale);
      s.get("phone_stay_prob", c.synth.phone_stay_prob);
      s.get("seed", c.synth.seed);
    }
    {
      auto s = root.section("data");
      s.get("utts_per_speaker", c.data.utts_per_speaker);
      s.get("eval_speakers", c.data.eval_speakers);
      s.get("n_target_trials", c.data.n_target_trials);
      s.get("n_nontarget_trials", c.data.n_nontarget_trials);
      s.get("trial_seed", c.data.trial_seed);
    }
    {
      auto s = root.section("encoder");
      s.get("n_layers", c.encoder.n_layers);
      s.get("model_dim", c.encoder.model_dim);
      s.get("n_attn_heads", c.encoder.n_attn_heads);
      s.get("ffn_dim", c.encoder.ffn_dim);
      s.get("position_scale", c.encoder.position_scale);
      s.get("seed", c.encoder.seed);
    }
    {
      auto s = root.section("pretrain");
      s.get("steps", c.pretrain.steps);
      s.get("batch_size", c.pretrain.batch_size);
      s.get("lr", c.pretrain.lr);
      s.get("mask_fraction", c.pretrain.mask_fraction);
      s.get("seed", c.pretrain.seed);
    }
    {
      auto s = root.section("train");
      TrainConfig& t = c.train;
      std::string backend = to_string(t.backend), constraint = to_string(t.constraint);
      s.get("backend", backend);
      s.get("constraint", constraint);
      try {
        t.backend = parse_backend(backend);
        t.constraint = parse_constraint(constraint);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("train: ") + e.what());
      }
      s.get("compress_dim", t.compress_dim);
      s.get("heads", t.heads);
      s.get("embed_dim", t.embed_dim);
      s.get("aam_margin", t.aam.margin);
      s.get("aam_scale", t.aam.scale);
      s.get("lambda", t.lambda);
      s.get("lr_backend", t.optim.lr_backend);
      s.get("lr_encoder", t.optim.lr_encoder);
      s.get("xi", t.optim.xi);
      s.get("epoch_decay", t.optim.epoch_decay);
      s.get("freeze_encoder", t.optim.freeze_encoder);
      s.get("clip_norm", t.optim.clip_norm);
      s.get("epochs", t.epochs);
      s.get("batch_size", t.batch_size);
      s.get("segment_frames", t.segment_frames);
      {
        auto l = s.section("lmft");
        l.get("enabled", t.lmft.enabled);
        l.get("epochs", t.lmft.epochs);
        l.get("margin", t.lmft.margin);
        l.get("segment_frames", t.lmft.segment_frames);
      }
      s.get("seed", t.seed);
    }
  }
  c.resolve();
  return c;
}

inline LabConfig parse_lab_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return lab_config_from_json(j);
}

inline LabConfig load_lab_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lab_config(ss.str());
}

inline std::string dump_lab_config(const LabConfig& c) { return to_json(c).dump(2) + "\n"; }

/// 64-bit FNV-1a, used for config and checkpoint hashes.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const LabConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

}  // namespace mhfa
