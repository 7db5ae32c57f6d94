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

#ifndef DSGG_NUMERICS_LINALG_HPP_
#define DSGG_NUMERICS_LINALG_HPP_

#include <span>

#include "dsgg/numerics/tensor.hpp"

namespace dsgg::numerics {

// c += a * b
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c);
// c += a * b^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
// c += a^T * b
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& z);
double log_sum_exp(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_LINALG_HPP_
