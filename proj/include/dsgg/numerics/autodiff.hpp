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

// Tape-based reverse-mode differentiation over matrices.
//
// A Graph records every op applied to its Vars in creation order, which is a
// topological order, so backward() is a single reverse sweep. Graphs own no
// global state: two threads may build and differentiate distinct graphs over
// the same (read-only) parameters concurrently.

#ifndef DSGG_NUMERICS_AUTODIFF_HPP_
#define DSGG_NUMERICS_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsgg/numerics/tensor.hpp"

namespace dsgg::numerics {

// A trainable tensor owned by a model. Frozen parameters enter graphs as
// constants and so never receive gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  void zero_grad();
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);
void set_frozen(const ParameterList& params, bool frozen);

enum class OpKind {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kConcat,
  kSlice,
  kTranspose,
  kRelu,
  kGelu,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLayerNorm,
  kEmbedding,
  kMean,
  kSum,
  kCrossEntropy,
  kBinaryCrossEntropy,
  kGruCell,
  kStopGradient,
  kMeanRows,
};

const char* op_name(OpKind kind);

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id()); }
  // Gradient of the last backward() root with respect to v; zeros if v was
  // not reached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Root must hold a single value. Accumulates into Parameter::grad of every
  // non-frozen parameter reachable from root.
  void backward(Var root);

  // Op plumbing.
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> parents,
             BackwardFn fn);
  Tensor& grad_buffer(std::size_t id);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_[id].parents;
  }

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    Tensor value;
    const Tensor* external = nullptr;  // parameter value, not copied
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops. Shape rules are those of the matrix view; violations throw
// std::invalid_argument naming the op and shapes, non-finite results throw
// std::domain_error.

Var matmul(Var a, Var b);
// b may match a's shape, be a 1xC row (broadcast over rows) or 1x1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Elementwise; b may be a 1xC row broadcast over rows.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var transpose(Var a);
Var relu(Var a);
Var gelu(Var a);  // exact erf form
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var layer_norm_rows(Var a, double eps = 1e-5);  // no affine part
Var embedding(Var table, std::span<const std::size_t> indices);
Var mean(Var a);
Var sum(Var a);
Var mean_rows(Var a);  // 1xC column means
// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);
// Mean over all entries of the logistic loss; targets in [0, 1].
Var binary_cross_entropy(Var logits, const Tensor& targets);
// Identity forward, zero backward.
Var stop_gradient(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

struct GruWeights {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_n, u_n, b_n;
};

// Standard gated recurrent unit:
//   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
//   n = tanh(x Wn + r * (h Un) + bn),  h' = n + z * (h - n)
Var gru_cell(Var x, Var h, const GruWeights& w);

// Dispatch by kind for ops whose inputs are all tensors. Index inputs
// (embedding, cross-entropy) are passed as a tensor of integral values.
Var forward_op(OpKind kind, std::span<const Var> inputs);

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_AUTODIFF_HPP_
