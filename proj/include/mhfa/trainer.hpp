// mhfa/trainer.hpp
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

// Joint fine-tuning, evaluation and ablation sweeps.

#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mhfa/io.hpp"
#include "mhfa/metrics.hpp"
#include "mhfa/model.hpp"
#include "mhfa/objective.hpp"

namespace mhfa {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::string phase;      // "main" or "lmft"
  double margin = 0.0;
  std::size_t segment_frames = 0;
  double loss = 0.0;            // mean batch loss over the epoch
  std::vector<double> drift;    // per encoder layer, after the epoch
};

struct RunRecord {
  std::string config_hash;
  std::vector<double> initial_drift;  // before the first update, all zero
  std::vector<EpochRecord> epochs;
  std::optional<MetricsReport> metrics;
  double wall_seconds = 0.0;  // not part of the exported record

  double final_drift_total() const {
    const auto& d = epochs.empty() ? initial_drift : epochs.back().drift;
    double s = 0.0;
    for (double x : d) s += x;
    return s;
  }
};

/// Train-time view of a config in a phase: the large-margin phase swaps
/// margin and segment length and nothing else.
inline TrainConfig phase_config(const TrainConfig& t, bool lmft) {
  TrainConfig out = t;
  if (lmft) {
    out.aam.margin = t.lmft.margin;
    out.segment_frames = t.lmft.segment_frames;
  }
  return out;
}

/// Seeded random crop of `frames` rows; shorter utterances are kept whole.
inline Tensor crop_frames(const Tensor& frames, std::size_t length, std::mt19937_64& rng) {
  const std::size_t T = frames.rows();
  if (T <= length) return frames;
  std::uniform_int_distribution<std::size_t> off(0, T - length);
  const std::size_t o = off(rng);
  Tensor out({length, frames.cols()});
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t j = 0; j < frames.cols(); ++j) out(t, j) = frames(o + t, j);
  return out;
}

/// Loss of one batch on `g`: AAM-softmax over the batch plus lambda * L_p.
inline Var batch_loss(Graph& g, const Model& m, const TrainConfig& phase,
                      const std::vector<Tensor>& segments, const std::vector<std::size_t>& labels) {
  std::vector<Var> rows;
  rows.reserve(segments.size());
  for (const Tensor& seg : segments) {
    const auto stack = encode(g, m.encoder, seg);
    rows.push_back(m.backend.forward(g, stack));
  }
  Var emb = rows.size() == 1 ? rows[0] : concat_rows(rows);
  AamConfig aam = phase.aam;
  aam.n_classes = m.n_classes;
  Var spk = aam_loss(aam, emb, g.param(m.class_weights), labels);
  Var reg = reg_loss(g, *m.snapshot, m.encoder);
  return total_loss(spk, reg, phase.lambda);
}

/// Embeddings of many utterances, optionally across worker threads. Results
/// land in input order, so the output does not depend on the thread count.
inline std::vector<SpeakerEmbedding> embed_all(const Model& m, const std::vector<const Tensor*>& frames,
                                               std::size_t threads = 1) {
  std::vector<SpeakerEmbedding> out(frames.size());
  threads = std::max<std::size_t>(1, std::min(threads, frames.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < frames.size(); ++i) out[i] = m.embed(*frames[i]);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < frames.size(); i += threads) out[i] = m.embed(*frames[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Scores in-memory trials over `corpus` indices.
inline TrialScoreSet score_trials(const Model& m, const Corpus& corpus,
                                  const std::vector<Trial>& trials, std::size_t threads = 1) {
  std::vector<std::size_t> used;
  for (const Trial& t : trials) used.push_back(t.enroll), used.push_back(t.test);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::vector<const Tensor*> frames;
  for (std::size_t i : used) {
    if (i >= corpus.size()) throw ContractError("trial references utterance " + std::to_string(i));
    frames.push_back(&corpus[i].frames);
  }
  const auto emb = embed_all(m, frames, threads);
  auto at = [&](std::size_t i) -> const SpeakerEmbedding& {
    return emb[std::lower_bound(used.begin(), used.end(), i) - used.begin()];
  };
  TrialScoreSet set;
  for (const Trial& t : trials) set.scores.push_back({cosine_score(at(t.enroll), at(t.test)), t.is_target});
  return set;
}

struct TrainOptions {
  const Corpus* eval_corpus = nullptr;          // optional held-out side
  const std::vector<Trial>* eval_trials = nullptr;
  std::size_t threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Fine-tunes `m` on `train` for the configured epochs (plus the
/// large-margin phase when enabled). A non-finite loss aborts with a
/// DivergenceError naming the step.
inline RunRecord train(Model& m, const Corpus& train, const TrainOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig& tc = m.cfg.train;
  RunRecord rec;
  rec.config_hash = config_hash(m.cfg);
  rec.initial_drift = layer_drift(m.encoder, *m.snapshot);
  if (count_classes(train) != m.n_classes)
    throw ConfigError("training corpus has " + std::to_string(count_classes(train)) +
                      " speakers, model expects " + std::to_string(m.n_classes));

  auto groups = m.groups();
  for (std::size_t e = 0; e < m.epochs_done; ++e) epoch_tick(groups, tc.optim);
  std::mt19937_64 rng(tc.seed * 0x2545f4914f6cdd1dull + 17);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t total_epochs = tc.epochs + (tc.lmft.enabled ? tc.lmft.epochs : 0);
  long step = m.adam.iteration();
  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const bool lmft = epoch >= tc.epochs;
    const TrainConfig phase = phase_config(tc, lmft);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
      std::vector<Tensor> segs;
      std::vector<std::size_t> labels;
      for (std::size_t k = b0; k < b1; ++k) {
        const Utterance& u = train[order[k]];
        segs.push_back(crop_frames(u.frames, phase.segment_frames, rng));
        labels.push_back(u.speaker_id);
      }
      ++step;
      Graph g;
      double value = 0.0;
      try {
        Var loss = batch_loss(g, m, phase, segs, labels);
        value = loss.value()[0];
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        g.backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at step " + std::to_string(step) + " (epoch " +
                                  std::to_string(epoch + 1) + "): " + e.what(),
                              step);
      }
      m.adam.step(groups, tc.optim.clip_norm);
      loss_sum += value;
      ++n_batches;
    }
    epoch_tick(groups, tc.optim);
    ++m.epochs_done;
    EpochRecord er{epoch + 1, lmft ? "lmft" : "main", phase.aam.margin, phase.segment_frames,
                   loss_sum / static_cast<double>(std::max<std::size_t>(1, n_batches)),
                   layer_drift(m.encoder, *m.snapshot)};
    for (const Param& p : m.optimized())
      if (!p->value.all_finite())
        throw DivergenceError("parameter '" + p->name + "' became non-finite at step " +
                                  std::to_string(step),
                              step);
    if (opt.on_epoch) opt.on_epoch(er);
    rec.epochs.push_back(std::move(er));
  }
  if (opt.eval_corpus && opt.eval_trials)
    rec.metrics = compute_metrics(score_trials(m, *opt.eval_corpus, *opt.eval_trials, opt.threads));
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Exported run record; wall time is kept out so reruns compare equal.
inline Json run_record_json(const RunRecord& r) {
  Json j;
  j["config_hash"] = r.config_hash;
  Json epochs = Json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"phase", e.phase},
                      {"margin", e.margin},
                      {"segment_frames", e.segment_frames},
                      {"loss", e.loss},
                      {"drift", e.drift}});
  j["epochs"] = epochs;
  Json drift = Json::array();
  drift.push_back(r.initial_drift);
  for (const auto& e : r.epochs) drift.push_back(e.drift);
  j["drift"] = drift;
  j["final_drift_total"] = r.final_drift_total();
  j["metrics"] = r.metrics ? metrics_json(*r.metrics) : Json(nullptr);
  return j;
}

/// CSV "epoch,layer,drift"; epoch 0 is the state before training.
inline std::string drift_csv(const RunRecord& r) {
  std::string out = "epoch,layer,drift\n";
  auto rows = [&out](std::size_t epoch, const std::vector<double>& d) {
    for (std::size_t l = 0; l < d.size(); ++l)
      out += std::to_string(epoch) + "," + std::to_string(l + 1) + "," + fmt_double(d[l]) + "\n";
  };
  rows(0, r.initial_drift);
  for (const auto& e : r.epochs) rows(e.epoch, e.drift);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation from files.

/// Embeddings keyed by (checkpoint hash, utterance path).
class EmbeddingCache {
 public:
  const SpeakerEmbedding* find(const std::string& ckpt, const std::string& path) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = map_.find({ckpt, path});
    return it == map_.end() ? nullptr : &it->second;
  }
  void put(const std::string& ckpt, const std::string& path, SpeakerEmbedding e) {
    std::lock_guard<std::mutex> lk(mu_);
    map_.emplace(std::make_pair(ckpt, path), std::move(e));
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> lk(mu_);
    return map_.size();
  }
  std::size_t misses() const noexcept { return misses_; }
  void count_miss(std::size_t n) noexcept { misses_ += n; }

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, SpeakerEmbedding> map_;
  std::size_t misses_ = 0;
};

/// Scores a trial file against a model. Every referenced utterance is
/// embedded once; paths resolve relative to the trial file's directory.
inline TrialScoreSet evaluate(const Model& m, const std::string& model_hash,
                              const fs::path& trial_file, EmbeddingCache& cache,
                              std::size_t threads = 1) {
  const auto trials = read_trials(trial_file);
  const fs::path base = trial_file.parent_path();
  std::vector<std::string> todo;
  for (const auto& t : trials)
    for (const std::string* p : {&t.enroll, &t.test})
      if (!cache.find(model_hash, *p) &&
          std::find(todo.begin(), todo.end(), *p) == todo.end())
        todo.push_back(*p);
  std::vector<Tensor> frames;
  frames.reserve(todo.size());
  for (const auto& p : todo) {
    const fs::path full = resolve(base, p);
    if (!fs::exists(full)) throw IoError("utterance file '" + full.string() + "' does not exist");
    frames.push_back(load_tensor(full));
  }
  std::vector<const Tensor*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  auto emb = embed_all(m, ptrs, threads);
  cache.count_miss(todo.size());
  for (std::size_t i = 0; i < todo.size(); ++i) cache.put(model_hash, todo[i], std::move(emb[i]));

  TrialScoreSet set;
  for (const auto& t : trials)
    set.scores.push_back({cosine_score(*cache.find(model_hash, t.enroll),
                                       *cache.find(model_hash, t.test)),
                          t.is_target});
  return set;
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class SweepAxis { xi, heads, lambda, constraint, backend };

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"xi", "heads", "lambda", "constraint", "backend"};
  return axes;
}

inline SweepAxis parse_axis(const std::string& s) {
  const auto& a = sweep_axes();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == s) return static_cast<SweepAxis>(i);
  std::string all;
  for (const auto& x : a) all += (all.empty() ? "" : ", ") + x;
  throw ContractError("unknown sweep axis '" + s + "' (valid: " + all + ")");
}

/// Copy of `base` with the axis set to `value`.
inline LabConfig apply_axis(LabConfig base, SweepAxis axis, const std::string& value) {
  auto number = [&value]() {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != value.size() || value.empty())
      throw ConfigError("sweep value '" + value + "' is not a number");
    return v;
  };
  switch (axis) {
    case SweepAxis::xi: base.train.optim.xi = number(); break;
    case SweepAxis::lambda: base.train.lambda = number(); break;
    case SweepAxis::heads: {
      const double h = number();
      if (!(h >= 1.0) || h != std::floor(h)) throw ConfigError("heads must be a positive integer");
      base.train.heads = static_cast<std::size_t>(h);
      break;
    }
    case SweepAxis::constraint: base.train.constraint = parse_constraint(value); break;
    case SweepAxis::backend: base.train.backend = parse_backend(value); break;
  }
  base.resolve();
  return base;
}

struct SweepRow {
  std::string value;
  std::string status;  // "ok", "diverged" or "failed"
  std::string message;
  std::optional<MetricsReport> metrics;
  double drift_total = 0.0;
  std::size_t parameter_count = 0;  // back-end
  std::optional<RunRecord> record;
};

struct Dataset {
  Corpus train;
  Corpus eval;
  std::vector<Trial> trials;
};

/// Builds the standard in-memory dataset for a config.
inline Dataset make_dataset(const LabConfig& cfg) {
  const Corpus all = make_corpus(cfg.synth, cfg.data.utts_per_speaker);
  auto split = split_by_speaker(all, cfg.synth.n_speakers, cfg.data.eval_speakers);
  Dataset d{std::move(split.train), std::move(split.eval), {}};
  d.trials = split_trials(d.eval, cfg.data.n_target_trials, cfg.data.n_nontarget_trials,
                          cfg.data.trial_seed);
  return d;
}

/// Shares one warm-up between runs whose encoder and pre-training agree.
class PretrainCache {
 public:
  std::shared_ptr<const PretrainedSnapshot> get(const LabConfig& cfg, const Corpus& train) {
    Json key = to_json(cfg);
    key.erase("train");
    const std::string k = key.dump();
    auto it = map_.find(k);
    if (it != map_.end()) return it->second;
    return map_[k] = pretrained_encoder(cfg, train).second;
  }

 private:
  std::map<std::string, std::shared_ptr<const PretrainedSnapshot>> map_;
};

/// One full run: init, fine-tune, evaluate.
inline std::pair<Model, RunRecord> run_experiment(const LabConfig& cfg, const Dataset& data,
                                                  PretrainCache* cache = nullptr,
                                                  std::size_t threads = 1) {
  Model m = init_model(cfg, data.train, cache ? cache->get(cfg, data.train) : nullptr);
  TrainOptions opt;
  opt.eval_corpus = &data.eval;
  opt.eval_trials = &data.trials;
  opt.threads = threads;
  RunRecord r = train(m, data.train, opt);
  return {std::move(m), std::move(r)};
}

/// Runs every value of one axis with the base seed and returns rows sorted
/// by the axis. Failing runs are marked and do not stop the sweep.
inline std::vector<SweepRow> sweep(const LabConfig& base, SweepAxis axis,
                                   const std::vector<std::string>& values, const Dataset& data,
                                   std::size_t threads = 1,
                                   const std::function<void(const SweepRow&)>& on_row = {}) {
  std::vector<SweepRow> rows;
  PretrainCache cache;
  for (const auto& v : values) {
    SweepRow row;
    row.value = v;
    const LabConfig cfg = apply_axis(base, axis, v);
    try {
      auto [m, rec] = run_experiment(cfg, data, &cache, threads);
      row.status = "ok";
      row.metrics = rec.metrics;
      row.drift_total = rec.final_drift_total();
      row.parameter_count = m.backend.parameter_count();
      row.record = std::move(rec);
    } catch (const DivergenceError& e) {
      row.status = "diverged";
      row.message = e.what();
    } catch (const Error& e) {
      row.status = "failed";
      row.message = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  auto key = [axis](const std::string& v) -> double {
    switch (axis) {
      case SweepAxis::constraint: return static_cast<double>(parse_constraint(v));
      case SweepAxis::backend: return static_cast<double>(parse_backend(v));
      default: return std::stod(v);
    }
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const SweepRow& a, const SweepRow& b) { return key(a.value) < key(b.value); });
  return rows;
}

inline std::string sweep_csv(const std::string& axis, const std::vector<SweepRow>& rows) {
  std::string out = axis + ",eer,dcf1,dcf5,final_drift_total,status\n";
  for (const auto& r : rows) {
    out += r.value + ",";
    if (r.metrics)
      out += fmt_double(r.metrics->eer) + "," + fmt_double(r.metrics->dcf1) + "," +
             fmt_double(r.metrics->dcf5) + "," + fmt_double(r.drift_total);
    else
      out += "NAN,NAN,NAN,NAN";
    out += "," + r.status + "\n";
  }
  return out;
}

}  // namespace mhfa
