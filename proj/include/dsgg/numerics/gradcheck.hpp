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

#ifndef DSGG_NUMERICS_GRADCHECK_HPP_
#define DSGG_NUMERICS_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"

namespace dsgg::numerics {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t coords_checked = 0;
  double worst_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the supplied analytic gradients against central differences
// (f(x+h) - f(x-h)) / 2h, one coordinate at a time. Report-only.
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const ParameterList& params,
                                  const std::vector<Tensor>& analytic,
                                  const GradCheckOptions& options = {});

// Builds the loss on a fresh graph, back-propagates for the analytic side and
// then runs finite_diff_check against forward-only rebuilds.
GradCheckReport check_gradients(const std::function<Var(Graph&)>& loss,
                                const ParameterList& params,
                                const GradCheckOptions& options = {});

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_GRADCHECK_HPP_
