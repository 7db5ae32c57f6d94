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

#include "dsgg/numerics/layers.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace dsgg::numerics {

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias)
    : weight(name + ".weight", rng.normal_tensor({in, out}, 1.0 / std::sqrt(double(in)))),
      bias(name + ".bias", Tensor({1, out})),
      has_bias(with_bias) {}

Var Linear::operator()(Graph& g, Var x) {
  Var y = matmul(x, g.param(weight));
  return has_bias ? add(y, g.param(bias)) : y;
}

ParameterList Linear::parameters() {
  if (has_bias) return {&weight, &bias};
  return {&weight};
}

Mlp::Mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
         Rng& rng)
    : first(name + ".fc1", in, hidden, rng), second(name + ".fc2", hidden, out, rng) {}

Var Mlp::operator()(Graph& g, Var x) { return second(g, gelu(first(g, x))); }

ParameterList Mlp::parameters() {
  return concat_params({first.parameters(), second.parameters()});
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gain(name + ".gain", Tensor({1, dim}, 1.0)), shift(name + ".shift", Tensor({1, dim})) {}

Var LayerNorm::operator()(Graph& g, Var x) {
  return add(mul(layer_norm_rows(x), g.param(gain)), g.param(shift));
}

ParameterList concat_params(std::initializer_list<ParameterList> lists) {
  ParameterList out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

Tensor causal_mask(std::size_t n) {
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m(i, j) = kMaskedScore;
  return m;
}

Var multi_head_attention(Var q, Var k, Var v, std::size_t heads, const Tensor* mask,
                         std::vector<Tensor>* probs) {
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0 || k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: incompatible shapes " + shape_string(q.value().shape()) + ", " +
                                shape_string(k.value().shape()) + ", " + shape_string(v.value().shape()));
  }
  if (mask && (mask->rows() != q.rows() || mask->cols() != k.rows()))
    throw std::invalid_argument("attention: mask shape " + shape_string(mask->shape()));
  Graph& g = *q.graph();
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(double(dh));
  std::optional<Var> m;
  if (mask) m = g.constant(*mask);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), inv);
    if (m) scores = add(scores, *m);
    Var p = softmax_rows(scores);
    if (probs) probs->push_back(p.value());
    outs.push_back(matmul(p, vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

}  // namespace dsgg::numerics
