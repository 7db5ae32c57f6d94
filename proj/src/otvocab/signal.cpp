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

#include "dsgg/otvocab/signal.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsgg::otvocab {

using numerics::Parameter;

SignalGenerator::SignalGenerator(std::size_t token_dim, std::size_t hidden, std::size_t num_units,
                                 numerics::Rng& rng)
    : head("ot.gen.head", hidden, num_units, rng) {
  const double sx = 1.0 / std::sqrt(double(token_dim)), sh = 1.0 / std::sqrt(double(hidden));
  auto gate = [&](const char* tag, Parameter& w, Parameter& u, Parameter& b) {
    w = Parameter(std::string("ot.gen.w_") + tag, rng.normal_tensor({token_dim, hidden}, sx));
    u = Parameter(std::string("ot.gen.u_") + tag, rng.normal_tensor({hidden, hidden}, sh));
    b = Parameter(std::string("ot.gen.b_") + tag, Tensor({1, hidden}));
  };
  gate("z", w_z, u_z, b_z);
  gate("r", w_r, u_r, b_r);
  gate("n", w_n, u_n, b_n);
}

Var SignalGenerator::generate(Graph& g, Var tokens, const Tensor& units, SignalMode mode) {
  return generate(g, tokens, units, mode, nullptr);
}

Var SignalGenerator::generate(Graph& g, Var tokens, const Tensor& units, SignalMode mode, Var* logits_out) {
  using namespace numerics;
  if (units.rows() == 0) throw std::invalid_argument("generate_signal: empty refined codebook");
  if (units.rows() != num_units()) {
    throw std::invalid_argument("generate_signal: generator emits " + std::to_string(num_units()) +
                                " logits but codebook has " + std::to_string(units.rows()) + " units");
  }
  if (tokens.rows() == 0) throw std::invalid_argument("generate_signal: no frame tokens");
  const std::size_t T = tokens.rows(), hidden = u_z.value.rows();
  GruWeights w{g.param(w_z), g.param(u_z), g.param(b_z), g.param(w_r), g.param(u_r),
               g.param(b_r), g.param(w_n), g.param(u_n), g.param(b_n)};
  Var e = g.constant(units);
  Var h = g.constant(Tensor({1, hidden}));
  std::vector<Var> steps, step_logits;
  for (std::size_t t = 0; t < T; ++t) {
    h = gru_cell(slice_rows(tokens, t, 1), h, w);
    Var z = head(g, h);
    step_logits.push_back(z);
    Var p = softmax_rows(z);
    if (mode == SignalMode::kHard) {
      const auto row = z.value().row_span(0);
      std::size_t best = 0;
      for (std::size_t k = 1; k < row.size(); ++k)
        if (row[k] > row[best]) best = k;
      Tensor onehot({1, row.size()});
      onehot(0, best) = 1.0;
      p = add(g.constant(onehot), sub(p, stop_gradient(p)));
    }
    steps.push_back(matmul(p, e));
  }
  if (logits_out) *logits_out = concat_rows(step_logits);
  return concat_rows(steps);
}

numerics::ParameterList SignalGenerator::parameters() {
  return numerics::concat_params(
      {{&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_n, &u_n, &b_n}, head.parameters()});
}

}  // namespace dsgg::otvocab
