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

#ifndef DSGG_NUMERICS_OPTIM_HPP_
#define DSGG_NUMERICS_OPTIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"

namespace dsgg::numerics {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Each step first shrinks the parameter by
// lr * weight_decay * p, then applies the bias-corrected moment update; the
// decay never enters the moment estimates.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  void step();
  void zero_grad() { zero_grads(params_); }

  std::int64_t steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const ParameterList& params() const { return params_; }

  // Moment access for checkpoint / resume.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::vector<Tensor> m, std::vector<Tensor> v);
  // Zeroes both moments of one row of a matrix parameter.
  void reset_row(const Parameter* param, std::size_t row);

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_ = 0;
};

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_OPTIM_HPP_
