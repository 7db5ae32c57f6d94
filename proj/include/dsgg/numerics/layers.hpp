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

#ifndef DSGG_NUMERICS_LAYERS_HPP_
#define DSGG_NUMERICS_LAYERS_HPP_

#include <string>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/rng.hpp"

namespace dsgg::numerics {

// y = x W + b with W: in x out. Weights ~ N(0, 1/in).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool bias = true);

  Var operator()(Graph& g, Var x);
  ParameterList parameters();

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Parameter weight;
  Parameter bias;
  bool has_bias = true;
};

// Linear -> GELU -> Linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
      Rng& rng);

  Var operator()(Graph& g, Var x);
  ParameterList parameters();

  Linear first;
  Linear second;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Var operator()(Graph& g, Var x);
  ParameterList parameters() { return {&gain, &shift}; }

  Parameter gain;
  Parameter shift;
};

ParameterList concat_params(std::initializer_list<ParameterList> lists);

// Additive attention mask entry for a blocked position. exp() of it
// underflows to exactly 0.
inline constexpr double kMaskedScore = -1e30;

// n x n, 0 on and below the diagonal.
Tensor causal_mask(std::size_t n);

// Scaled dot-product attention split over `heads` column groups. q: n x d,
// k and v: m x d, mask: n x m additive or null. When `probs` is given the
// per-head attention matrices are appended to it.
Var multi_head_attention(Var q, Var k, Var v, std::size_t heads, const Tensor* mask,
                         std::vector<Tensor>* probs = nullptr);

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_LAYERS_HPP_
