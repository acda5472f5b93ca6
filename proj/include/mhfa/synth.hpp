// mhfa/synth.hpp
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

// Seeded synthetic speech-like corpora. Every frame is
//   speaker_scale * u(speaker) + phone_scale * v(phone_t) + noise_scale * eps_t
// with u, v random unit vectors and phone_t a sticky Markov chain.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "mhfa/error.hpp"
#include "mhfa/tensor.hpp"

namespace mhfa {

struct SynthConfig {
  std::size_t n_speakers = 40;
  std::size_t n_phones = 8;
  std::size_t frame_dim = 16;
  std::size_t frames_per_utt = 40;
  double speaker_scale = 1.0;
  double phone_scale = 2.0;
  double noise_scale = 0.8;
  double phone_stay_prob = 0.7;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_speakers < 2) throw ConfigError("synth.n_speakers must be >= 2");
    if (n_phones < 1) throw ConfigError("synth.n_phones must be >= 1");
    if (frame_dim < 1) throw ConfigError("synth.frame_dim must be >= 1");
    if (frames_per_utt < 1) throw ConfigError("synth.frames_per_utt must be >= 1");
    if (speaker_scale < 0 || phone_scale < 0 || noise_scale < 0)
      throw ConfigError("synth scales must be non-negative");
    if (!(phone_stay_prob >= 0.0 && phone_stay_prob <= 1.0))
      throw ConfigError("synth.phone_stay_prob must lie in [0, 1]");
  }

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Utterance {
  std::string key;  // "spkNNN_uttNNN"; doubles as the export file stem
  Tensor frames;    // [T x F0]
  std::size_t speaker_id = 0;
  std::vector<std::size_t> phone_seq;  // hidden ground truth, one per frame
};

using Corpus = std::vector<Utterance>;

namespace detail {

inline std::vector<double> random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(dim);
  double s = 0.0;
  do {
    s = 0.0;
    for (double& x : v) {
      x = n01(rng);
      s += x * x;
    }
  } while (s == 0.0);
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
  return v;
}

inline std::string utt_key(std::size_t spk, std::size_t utt) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "spk%03zu_utt%03zu", spk, utt);
  return buf;
}

}  // namespace detail

/// Corpus of `n_utts_per_speaker` utterances for each speaker, speaker-major.
inline Corpus make_corpus(const SynthConfig& cfg, std::size_t n_utts_per_speaker) {
  cfg.validate();
  if (n_utts_per_speaker < 1) throw ConfigError("utterances per speaker must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<double>> spk(cfg.n_speakers), phone(cfg.n_phones);
  for (auto& u : spk) u = detail::random_unit_vector(rng, cfg.frame_dim);
  for (auto& v : phone) v = detail::random_unit_vector(rng, cfg.frame_dim);

  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Corpus corpus;
  corpus.reserve(cfg.n_speakers * n_utts_per_speaker);
  const std::size_t T = cfg.frames_per_utt, F = cfg.frame_dim;
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    for (std::size_t u = 0; u < n_utts_per_speaker; ++u) {
      Utterance utt;
      utt.key = detail::utt_key(s, u);
      utt.speaker_id = s;
      utt.phone_seq.resize(T);
      std::size_t ph = std::uniform_int_distribution<std::size_t>(0, cfg.n_phones - 1)(rng);
      for (std::size_t t = 0; t < T; ++t) {
        if (t > 0 && cfg.n_phones > 1 && u01(rng) >= cfg.phone_stay_prob) {
          // Move to one of the other phones, uniformly.
          std::size_t nxt =
              std::uniform_int_distribution<std::size_t>(0, cfg.n_phones - 2)(rng);
          ph = nxt >= ph ? nxt + 1 : nxt;
        }
        utt.phone_seq[t] = ph;
      }
      utt.frames = Tensor({T, F});
      for (std::size_t t = 0; t < T; ++t) {
        const auto& v = phone[utt.phone_seq[t]];
        for (std::size_t f = 0; f < F; ++f) {
          const double noise = n01(rng);
          utt.frames(t, f) =
              cfg.speaker_scale * spk[s][f] + cfg.phone_scale * v[f] + cfg.noise_scale * noise;
        }
      }
      corpus.push_back(std::move(utt));
    }
  }
  return corpus;
}

struct Trial {
  std::size_t enroll = 0;  // corpus index
  std::size_t test = 0;    // corpus index
  bool is_target = false;

  friend bool operator==(const Trial&, const Trial&) = default;
};

/// Seeded trial sampling. Distinct pairs are drawn without replacement; only
/// when a request exceeds the number of distinct pairs are the remaining
/// trials drawn with replacement. No trial pairs an utterance with itself.
inline std::vector<Trial> split_trials(const Corpus& corpus, std::size_t n_target,
                                       std::size_t n_nontarget, std::uint64_t seed) {
  std::vector<Trial> targets, nontargets;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      const bool same = corpus[i].speaker_id == corpus[j].speaker_id;
      (same ? targets : nontargets).push_back(Trial{i, j, same});
    }
  if (n_target > 0 && targets.empty())
    throw CapacityError("cannot draw " + std::to_string(n_target) +
                        " target trials: no speaker has two utterances");
  if (n_nontarget > 0 && nontargets.empty())
    throw CapacityError("cannot draw " + std::to_string(n_nontarget) +
                        " non-target trials: corpus has fewer than two speakers");

  std::mt19937_64 rng(seed);
  auto draw = [&rng](std::vector<Trial>& pool, std::size_t n) {
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<Trial> out(pool.begin(), pool.begin() + std::min(n, pool.size()));
    if (n > pool.size()) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      while (out.size() < n) out.push_back(pool[pick(rng)]);
    }
    return out;
  };
  std::vector<Trial> trials = draw(targets, n_target);
  std::vector<Trial> nt = draw(nontargets, n_nontarget);
  trials.insert(trials.end(), nt.begin(), nt.end());
  std::shuffle(trials.begin(), trials.end(), rng);
  return trials;
}

/// Speaker-disjoint split: the last `n_eval_speakers` speakers go to the
/// evaluation side; training speaker ids stay contiguous from zero.
struct CorpusSplit {
  Corpus train;
  Corpus eval;
};

inline CorpusSplit split_by_speaker(const Corpus& corpus, std::size_t n_speakers,
                                    std::size_t n_eval_speakers) {
  if (n_eval_speakers >= n_speakers)
    throw ConfigError("eval speakers (" + std::to_string(n_eval_speakers) +
                      ") must be fewer than speakers (" + std::to_string(n_speakers) + ")");
  CorpusSplit out;
  const std::size_t first_eval = n_speakers - n_eval_speakers;
  for (const Utterance& u : corpus) (u.speaker_id < first_eval ? out.train : out.eval).push_back(u);
  return out;
}

}  // namespace mhfa
