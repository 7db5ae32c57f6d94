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

#ifndef DSGG_PIPELINE_GRADSUITE_HPP_
#define DSGG_PIPELINE_GRADSUITE_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsgg/numerics/gradcheck.hpp"

namespace dsgg::pipeline {

struct GradCase {
  std::string name;
  std::uint64_t seed = 0;
  numerics::GradCheckReport report;
};

struct GradSuiteResult {
  std::vector<GradCase> cases;
  bool passed = true;
  std::size_t coords = 0;
  double seconds = 0.0;
};

// Central finite differences (h = 1e-5, rel tol 1e-4) for every
// differentiable op and every composite loss of the pipeline, each on
// `seeds` seeded random instances. Outputs are contracted with a random
// weight tensor so every output coordinate is exercised.
GradSuiteResult run_gradient_suite(std::size_t seeds = 4,
                                   const std::function<void(const GradCase&)>& on_case = {});

}  // namespace dsgg::pipeline

#endif  // DSGG_PIPELINE_GRADSUITE_HPP_
