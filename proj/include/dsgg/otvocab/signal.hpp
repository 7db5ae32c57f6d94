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

#ifndef DSGG_OTVOCAB_SIGNAL_HPP_
#define DSGG_OTVOCAB_SIGNAL_HPP_

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/numerics/rng.hpp"

namespace dsgg::otvocab {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

enum class SignalMode { kSoft, kHard };

// Per-position GRU over the frame tokens; every step emits logits over the
// refined units.
//   soft: softmax(logits) @ units
//   hard: onehot(argmax) @ units forward, softmax gradient backward
class SignalGenerator {
 public:
  SignalGenerator() = default;
  SignalGenerator(std::size_t token_dim, std::size_t hidden, std::size_t num_units, numerics::Rng& rng);

  // tokens: T x l, units: s x l (constant). Returns T x l.
  Var generate(Graph& g, Var tokens, const Tensor& units, SignalMode mode);
  // Same, also returning the T x s step logits.
  Var generate(Graph& g, Var tokens, const Tensor& units, SignalMode mode, Var* logits);

  numerics::ParameterList parameters();
  std::size_t num_units() const { return head.out_dim(); }

  numerics::Parameter w_z, u_z, b_z;
  numerics::Parameter w_r, u_r, b_r;
  numerics::Parameter w_n, u_n, b_n;
  numerics::Linear head;
};

}  // namespace dsgg::otvocab

#endif  // DSGG_OTVOCAB_SIGNAL_HPP_
