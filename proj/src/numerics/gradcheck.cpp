// Copyright 2026 The dsgg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dsgg/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsgg/numerics/rng.hpp"

namespace dsgg::numerics {

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const ParameterList& params,
                                  const std::vector<Tensor>& analytic,
                                  const GradCheckOptions& options) {
  if (options.step <= 0) throw std::invalid_argument("gradcheck: step must be > 0");
  if (analytic.size() != params.size()) {
    throw std::invalid_argument("gradcheck: one analytic gradient per parameter");
  }
  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coords_per_param && n > options.max_coords_per_param) {
      auto perm = rng.permutation(n);
      coords.assign(perm.begin(), perm.begin() + options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p.value[i];
      p.value[i] = saved + options.step;
      const double up = f();
      p.value[i] = saved - options.step;
      const double down = f();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.worst_rel_error || report.coords_checked == 1) {
        report.worst_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.worst_rel_error < options.tolerance;
  return report;
}

GradCheckReport check_gradients(const std::function<Var(Graph&)>& loss,
                                const ParameterList& params,
                                const GradCheckOptions& options) {
  for (auto* p : params) {
    if (p->frozen) {
      throw std::invalid_argument("gradcheck: parameter '" + p->name + "' is frozen");
    }
  }
  zero_grads(params);
  {
    Graph g;
    Var root = loss(g);
    g.backward(root);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);
  auto f = [&]() {
    Graph g;
    return loss(g).value().item();
  };
  return finite_diff_check(f, params, analytic, options);
}

}  // namespace dsgg::numerics
