// mhfa/gradcheck.hpp
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
#include <functional>
#include <string>
#include <vector>

#include "mhfa/autograd.hpp"

namespace mhfa {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;  // name of the parameter holding the worst entry
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

/// Builds a scalar-valued graph from the current parameter values.
using ScalarFn = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of `f` against central differences for
/// every entry of every parameter. Relative error per entry is
/// |analytic - numeric| / (|numeric| + 1e-12).
///
/// `corrupt_analytic` doubles the first analytic entry before comparing; it
/// exists so the checker itself can be shown to catch a broken backward.
inline GradCheckResult grad_check(const ScalarFn& f, const std::vector<Param>& params,
                                  double eps = 1e-5, bool corrupt_analytic = false) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ContractError("grad_check step must lie in [1e-7, 1e-3], got " + std::to_string(eps));

  auto eval = [&]() {
    Graph g;
    const double v = f(g).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
  };

  for (const Param& p : params) p->zero_grad();
  {
    Graph g;
    Var y = f(g);
    if (!std::isfinite(y.value()[0])) throw NumericError("grad_check: non-finite loss");
    g.backward(y);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param& p : params)
    analytic.push_back(p->has_grad() ? p->grad : Tensor::zeros(p->value.shape()));
  if (corrupt_analytic && !analytic.empty()) analytic.front()[0] *= 2.0;

  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& x = params[k]->value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + eps;
      const double fp = eval();
      x[i] = orig - eps;
      const double fm = eval();
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double rel = std::abs(analytic[k][i] - numeric) / (std::abs(numeric) + 1e-12);
      ++res.n_checked;
      if (rel > res.max_rel_error || std::isnan(rel)) {
        res.max_rel_error = rel;
        res.worst_param = params[k]->name;
        res.worst_index = i;
      }
    }
  }
  for (const Param& p : params) p->zero_grad();
  return res;
}

}  // namespace mhfa
