// mhfa/metrics.hpp
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

// Verification metrics over scored trials.
//
// A trial is accepted when its score is >= the threshold. Thresholds range
// over -inf, every midpoint between consecutive distinct scores, and +inf,
// giving one operating point (P_fr, P_fa) per threshold.
//
// The EER is read off the lower convex hull of those operating points, at
// the point where the hull crosses P_fr == P_fa; between two hull vertices
// the curve is the straight line joining them. Intersections are computed
// as exact rationals over the integer error counts, so the result does not
// depend on which of several collinear vertices is used.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mhfa/error.hpp"
#include "mhfa/pooling.hpp"

namespace mhfa {

struct ScoredTrial {
  double score = 0.0;
  bool is_target = false;
};

struct TrialScoreSet {
  std::vector<ScoredTrial> scores;

  std::size_t n_target() const {
    return static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(),
                                                  [](const ScoredTrial& s) { return s.is_target; }));
  }
  std::size_t n_nontarget() const { return scores.size() - n_target(); }

  void require_defined() const {
    const std::size_t nt = n_target();
    if (nt == 0 || nt == scores.size())
      throw MetricUndefinedError("metrics need at least one target and one non-target trial (got " +
                                 std::to_string(nt) + " targets, " +
                                 std::to_string(scores.size() - nt) + " non-targets)");
    for (const auto& s : scores)
      if (!std::isfinite(s.score)) throw NumericError("trial score is not finite");
  }
};

struct DcfConfig {
  double p_tar = 0.01;
  double c_fa = 1.0;
  double c_fr = 1.0;

  void validate() const {
    if (!(p_tar > 0.0 && p_tar < 1.0)) throw ConfigError("p_tar must lie in (0, 1)");
    if (!(c_fa > 0.0 && c_fr > 0.0)) throw ConfigError("detection costs must be positive");
  }
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Dot product of two unit embeddings.
inline double cosine_score(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.vector.size() != b.vector.size())
    throw ShapeError("cosine_score: embedding sizes " + std::to_string(a.vector.size()) +
                     " and " + std::to_string(b.vector.size()));
  if (std::abs(a.norm() - 1.0) > 1e-6 || std::abs(b.norm() - 1.0) > 1e-6)
    throw ContractError("cosine_score expects unit-norm embeddings");
  double s = 0.0;
  for (std::size_t i = 0; i < a.vector.size(); ++i) s += a.vector[i] * b.vector[i];
  return std::clamp(s, -1.0, 1.0);
}

namespace detail {

/// Error counts at each threshold, lowest threshold first.
struct OperatingPoints {
  std::vector<std::int64_t> miss;  // targets rejected
  std::vector<std::int64_t> fa;    // non-targets accepted
  std::vector<double> threshold;
  std::int64_t n_target = 0;
  std::int64_t n_nontarget = 0;
};

inline OperatingPoints operating_points(const TrialScoreSet& set) {
  set.require_defined();
  std::vector<ScoredTrial> s = set.scores;
  std::sort(s.begin(), s.end(),
            [](const ScoredTrial& a, const ScoredTrial& b) { return a.score < b.score; });
  OperatingPoints op;
  op.n_target = static_cast<std::int64_t>(set.n_target());
  op.n_nontarget = static_cast<std::int64_t>(s.size()) - op.n_target;
  std::int64_t miss = 0, fa = op.n_nontarget;
  op.miss.push_back(miss);
  op.fa.push_back(fa);
  op.threshold.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    for (; j < s.size() && s[j].score == s[i].score; ++j) (s[j].is_target ? ++miss : --fa);
    op.miss.push_back(miss);
    op.fa.push_back(fa);
    op.threshold.push_back(j < s.size() ? 0.5 * (s[i].score + s[j].score)
                                        : std::numeric_limits<double>::infinity());
    i = j;
  }
  return op;
}

/// Exact rational value num/den with den > 0, reduced.
struct Rational {
  __int128 num = 0;
  __int128 den = 1;

  static Rational make(__int128 n, __int128 d) {
    if (d < 0) n = -n, d = -d;
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
      const __int128 r = a % b;
      a = b;
      b = r;
    }
    if (a > 1) n /= a, d /= a;
    return Rational{n, d};
  }

  double to_double() const {
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
  }

  friend bool operator<(const Rational& a, const Rational& b) { return a.num * b.den < b.num * a.den; }
};

/// Where the segment between operating points i and j meets P_fr == P_fa.
/// Coordinates are scaled to integers: x = fa * Nt, y = miss * Nn.
inline Rational diagonal_crossing(std::int64_t xi, std::int64_t yi, std::int64_t xj, std::int64_t yj,
                                  std::int64_t nt, std::int64_t nn) {
  const __int128 di = static_cast<__int128>(yi) - xi;
  const __int128 dj = static_cast<__int128>(yj) - xj;
  const __int128 scale = static_cast<__int128>(nt) * nn;
  if (di == dj) return Rational::make(xi, scale);  // both on the diagonal
  return Rational::make(static_cast<__int128>(xi) * dj - static_cast<__int128>(xj) * di,
                        (dj - di) * scale);
}

}  // namespace detail

inline EerResult eer(const TrialScoreSet& set) {
  const auto op = detail::operating_points(set);
  const std::int64_t nt = op.n_target, nn = op.n_nontarget;
  const std::size_t n = op.miss.size();
  std::vector<std::int64_t> x(n), y(n);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = op.fa[k] * nt;
    y[k] = op.miss[k] * nn;
  }
  // Lower hull, walking from (x max, y 0) to (x 0, y max); x falls, y rises.
  std::vector<std::size_t> hull;
  for (std::size_t k = 0; k < n; ++k) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2], b = hull.back();
      const __int128 cross =
          static_cast<__int128>(x[b] - x[a]) * (y[k] - y[a]) -
          static_cast<__int128>(y[b] - y[a]) * (x[k] - x[a]);
      if (cross <= 0) break;  // b stays only if the turn a->b->k bends away from the origin
      hull.pop_back();
    }
    hull.push_back(k);
  }
  for (std::size_t h = 0; h < hull.size(); ++h) {
    const std::size_t k = hull[h];
    if (y[k] - x[k] >= 0) {
      // First hull vertex on or above the diagonal; its predecessor lies below.
      const std::size_t i = h == 0 ? k : hull[h - 1];
      const auto r = detail::diagonal_crossing(x[i], y[i], x[k], y[k], nt, nn);
      double thr = op.threshold[k];
      if (i != k) {
        const double di = static_cast<double>(y[i] - x[i]);
        const double dk = static_cast<double>(y[k] - x[k]);
        const double s = dk == di ? 0.0 : -di / (dk - di);
        const double ti = op.threshold[i], tk = op.threshold[k];
        if (std::isfinite(ti) && std::isfinite(tk))
          thr = ti + s * (tk - ti);
        else
          thr = std::isfinite(ti) ? ti : tk;
      }
      return EerResult{r.to_double(), thr};
    }
  }
  throw MetricUndefinedError("no crossing of the error-rate curves");  // unreachable
}

/// Minimum over thresholds of c_fr p P_fr + c_fa (1-p) P_fa, normalized by
/// the cheaper of the two trivial policies.
inline double min_dcf(const TrialScoreSet& set, const DcfConfig& cfg) {
  cfg.validate();
  const auto op = detail::operating_points(set);
  const double nt = static_cast<double>(op.n_target), nn = static_cast<double>(op.n_nontarget);
  const double norm = std::min(cfg.c_fr * cfg.p_tar, cfg.c_fa * (1.0 - cfg.p_tar));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < op.miss.size(); ++k) {
    const double p_fr = static_cast<double>(op.miss[k]) / nt;
    const double p_fa = static_cast<double>(op.fa[k]) / nn;
    const double cost = cfg.c_fr * cfg.p_tar * p_fr + cfg.c_fa * (1.0 - cfg.p_tar) * p_fa;
    best = std::min(best, cost / norm);
  }
  return best;
}

struct MetricsReport {
  double eer = 0.0;
  double dcf1 = 0.0;  // p_tar = 0.01
  double dcf5 = 0.0;  // p_tar = 0.05
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

inline MetricsReport compute_metrics(const TrialScoreSet& set) {
  MetricsReport r;
  r.eer = eer(set).eer;
  r.dcf1 = min_dcf(set, DcfConfig{0.01, 1.0, 1.0});
  r.dcf5 = min_dcf(set, DcfConfig{0.05, 1.0, 1.0});
  r.n_target = set.n_target();
  r.n_nontarget = set.n_nontarget();
  return r;
}

}  // namespace mhfa
