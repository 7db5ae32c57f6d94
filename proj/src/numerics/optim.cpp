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

#include "dsgg/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dsgg::numerics {

AdamW::AdamW(ParameterList params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Parameter& p = *params_[k];
    if (p.grad.shape() != p.value.shape()) {
      throw std::invalid_argument("adamw: gradient " + shape_string(p.grad.shape()) +
                                  " does not match parameter '" + p.name + "' " +
                                  shape_string(p.value.shape()));
    }
    if (!p.grad.all_finite()) {
      throw std::domain_error("adamw: non-finite gradient for '" + p.name + "'");
    }
  }
  ++step_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.frozen) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      if (c.weight_decay != 0.0) p.value[i] -= c.lr * c.weight_decay * p.value[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

void AdamW::restore(std::int64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("adamw: restore with wrong number of moments");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].shape() != params_[k]->value.shape() ||
        v[k].shape() != params_[k]->value.shape()) {
      throw std::invalid_argument("adamw: restored moment shape mismatch for '" +
                                  params_[k]->name + "'");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamW::reset_row(const Parameter* param, std::size_t row) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k] != param) continue;
    if (row >= param->value.rows()) throw std::out_of_range("adamw: reset_row out of range");
    for (double& x : m_[k].row_span(row)) x = 0.0;
    for (double& x : v_[k].row_span(row)) x = 0.0;
    return;
  }
  throw std::invalid_argument("adamw: reset_row on unknown parameter");
}

}  // namespace dsgg::numerics
