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

#include "dsgg/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dsgg/numerics/linalg.hpp"

namespace dsgg::numerics {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  grad.fill(0.0);
}

void zero_grads(const ParameterList& params) {
  for (auto* p : params) p->zero_grad();
}

void set_frozen(const ParameterList& params, bool frozen) {
  for (auto* p : params) p->frozen = frozen;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "elementwise-mul";
    case OpKind::kScale: return "scale";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kRelu: return "relu";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLayerNorm: return "layernorm";
    case OpKind::kEmbedding: return "embedding-lookup";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kCrossEntropy: return "cross-entropy";
    case OpKind::kBinaryCrossEntropy: return "binary-cross-entropy";
    case OpKind::kGruCell: return "gru-cell";
    case OpKind::kStopGradient: return "stop-gradient";
    case OpKind::kMeanRows: return "mean-rows";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) {
    throw std::domain_error("graph: non-finite constant of shape " +
                            shape_string(value.shape()));
  }
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  if (!p.value.all_finite()) {
    throw std::domain_error("graph: parameter '" + p.name +
                            "' holds non-finite values");
  }
  Node n;
  n.external = &p.value;
  n.requires_grad = !p.frozen;
  n.param = p.frozen ? nullptr : &p;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(value(v.id()).shape());
  return n.grad;
}

Var Graph::record(OpKind kind, Tensor value, std::vector<std::size_t> parents,
                  BackwardFn fn) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string(op_name(kind)) +
                            ": non-finite output of shape " +
                            shape_string(value.shape()));
  }
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  for (auto p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw std::invalid_argument("backward: foreign var");
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                shape_string(value(root).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.grad.shape()) pg = Tensor(n.grad.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_string(a.shape()) + " and " +
                              shape_string(b.shape()));
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() == nullptr || a.graph() != b.graph()) {
    throw std::invalid_argument("ops: vars belong to different graphs");
  }
  return *a.graph();
}

Tensor matrix_like(std::size_t r, std::size_t c) { return Tensor({r, c}); }

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  shape_error(op, a, b);
}

// Reduce an upstream gradient shaped like `a` down to the shape of `b`.
void accumulate_broadcast(Broadcast kind, const Tensor& up, Tensor& gb) {
  switch (kind) {
    case Broadcast::kSame:
      for (std::size_t i = 0; i < up.size(); ++i) gb[i] += up[i];
      break;
    case Broadcast::kScalar:
      for (std::size_t i = 0; i < up.size(); ++i) gb[0] += up[i];
      break;
    case Broadcast::kRow: {
      const std::size_t c = up.cols();
      for (std::size_t i = 0; i < up.size(); ++i) gb[i % c] += up[i];
      break;
    }
  }
}

double bvalue(Broadcast kind, const Tensor& b, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return b[i];
    case Broadcast::kScalar: return b[0];
    case Broadcast::kRow: return b[i % cols];
  }
  return 0.0;
}

template <typename Fwd, typename Deriv>
Var unary(OpKind kind, Var a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return g.record(kind, std::move(y), {a.id()}, [deriv](Graph& g, std::size_t self) {
    const auto pid = g.parents(self)[0];
    if (!g.needs(pid)) return;
    const Tensor& x = g.value(pid);
    const Tensor& y = g.value(self);
    const Tensor& up = g.upstream(self);
    Tensor& gx = g.grad_buffer(pid);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += up[i] * deriv(x[i], y[i]);
  });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

std::vector<std::size_t> to_indices(const Tensor& t) {
  std::vector<std::size_t> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0 || t[i] != std::floor(t[i])) {
      throw std::invalid_argument("ops: index tensor holds a non-index value");
    }
    out[i] = static_cast<std::size_t>(t[i]);
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) shape_error("matmul", x, y);
  Tensor out = matrix_like(x.rows(), y.cols());
  gemm_nn(x, y, out);
  return g.record(OpKind::kMatmul, std::move(out), {a.id(), b.id()},
                  [](Graph& g, std::size_t self) {
                    const auto pa = g.parents(self)[0];
                    const auto pb = g.parents(self)[1];
                    const Tensor& up = g.upstream(self);
                    if (g.needs(pa)) gemm_nt(up, g.value(pb), g.grad_buffer(pa));
                    if (g.needs(pb)) gemm_tn(g.value(pa), up, g.grad_buffer(pb));
                  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto kind = broadcast_kind("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + bvalue(kind, y, i, x.cols());
  return g.record(OpKind::kAdd, std::move(out), {a.id(), b.id()},
                  [kind](Graph& g, std::size_t self) {
                    const auto pa = g.parents(self)[0];
                    const auto pb = g.parents(self)[1];
                    const Tensor& up = g.upstream(self);
                    if (g.needs(pa)) accumulate_broadcast(Broadcast::kSame, up, g.grad_buffer(pa));
                    if (g.needs(pb)) accumulate_broadcast(kind, up, g.grad_buffer(pb));
                  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto kind = broadcast_kind("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - bvalue(kind, y, i, x.cols());
  return g.record(OpKind::kSub, std::move(out), {a.id(), b.id()},
                  [kind](Graph& g, std::size_t self) {
                    const auto pa = g.parents(self)[0];
                    const auto pb = g.parents(self)[1];
                    const Tensor& up = g.upstream(self);
                    if (g.needs(pa)) accumulate_broadcast(Broadcast::kSame, up, g.grad_buffer(pa));
                    if (g.needs(pb)) {
                      Tensor neg(up.shape());
                      for (std::size_t i = 0; i < up.size(); ++i) neg[i] = -up[i];
                      accumulate_broadcast(kind, neg, g.grad_buffer(pb));
                    }
                  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto kind = broadcast_kind("elementwise-mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * bvalue(kind, y, i, x.cols());
  return g.record(OpKind::kMul, std::move(out), {a.id(), b.id()},
                  [kind](Graph& g, std::size_t self) {
                    const auto pa = g.parents(self)[0];
                    const auto pb = g.parents(self)[1];
                    const Tensor& x = g.value(pa);
                    const Tensor& y = g.value(pb);
                    const Tensor& up = g.upstream(self);
                    const std::size_t c = x.cols();
                    if (g.needs(pa)) {
                      Tensor& gx = g.grad_buffer(pa);
                      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += up[i] * bvalue(kind, y, i, c);
                    }
                    if (g.needs(pb)) {
                      Tensor prod(x.shape());
                      for (std::size_t i = 0; i < x.size(); ++i) prod[i] = up[i] * x[i];
                      accumulate_broadcast(kind, prod, g.grad_buffer(pb));
                    }
                  });
}

Var scale(Var a, double s) {
  return unary(OpKind::kScale, a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Graph& g = *parts[0].graph();
  const std::size_t r = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.graph() != &g) throw std::invalid_argument("concat: mixed graphs");
    if (p.value().rows() != r) shape_error("concat", parts[0].value(), p.value());
    total += p.value().cols();
    ids.push_back(p.id());
  }
  Tensor out = matrix_like(r, total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(t.row_span(i).begin(), t.cols(), out.row_span(i).begin() + offset);
    offset += t.cols();
  }
  return g.record(OpKind::kConcat, std::move(out), std::move(ids),
                  [](Graph& g, std::size_t self) {
                    const Tensor& up = g.upstream(self);
                    std::size_t offset = 0;
                    for (auto pid : g.parents(self)) {
                      const std::size_t c = g.value(pid).cols();
                      if (g.needs(pid)) {
                        Tensor& gp = g.grad_buffer(pid);
                        for (std::size_t i = 0; i < up.rows(); ++i)
                          for (std::size_t j = 0; j < c; ++j) gp(i, j) += up(i, offset + j);
                      }
                      offset += c;
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Graph& g = *parts[0].graph();
  const std::size_t c = parts[0].value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.graph() != &g) throw std::invalid_argument("concat: mixed graphs");
    if (p.value().cols() != c) shape_error("concat", parts[0].value(), p.value());
    total += p.value().rows();
    ids.push_back(p.id());
  }
  Tensor out = matrix_like(total, c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    std::copy(t.values().begin(), t.values().end(), out.values().begin() + offset * c);
    offset += t.rows();
  }
  return g.record(OpKind::kConcat, std::move(out), std::move(ids),
                  [](Graph& g, std::size_t self) {
                    const Tensor& up = g.upstream(self);
                    std::size_t offset = 0;
                    for (auto pid : g.parents(self)) {
                      const std::size_t n = g.value(pid).size();
                      if (g.needs(pid)) {
                        Tensor& gp = g.grad_buffer(pid);
                        for (std::size_t i = 0; i < n; ++i) gp[i] += up[offset + i];
                      }
                      offset += n;
                    }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (begin + count > x.cols() || count == 0) {
    throw std::invalid_argument("slice: columns [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") out of " +
                                shape_string(x.shape()));
  }
  Tensor out = matrix_like(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  return g.record(OpKind::kSlice, std::move(out), {a.id()},
                  [begin, count](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& up = g.upstream(self);
                    Tensor& gx = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < up.rows(); ++i)
                      for (std::size_t j = 0; j < count; ++j) gx(i, begin + j) += up(i, j);
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  if (begin + count > x.rows() || count == 0) {
    throw std::invalid_argument("slice: rows [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") out of " +
                                shape_string(x.shape()));
  }
  const std::size_t c = x.cols();
  Tensor out = matrix_like(count, c);
  std::copy_n(x.values().begin() + begin * c, count * c, out.values().begin());
  return g.record(OpKind::kSlice, std::move(out), {a.id()},
                  [begin, c](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& up = g.upstream(self);
                    Tensor& gx = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < up.size(); ++i) gx[begin * c + i] += up[i];
                  });
}

Var transpose(Var a) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  Tensor out = matrix_like(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  return g.record(OpKind::kTranspose, std::move(out), {a.id()},
                  [](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& up = g.upstream(self);
                    Tensor& gx = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < up.rows(); ++i)
                      for (std::size_t j = 0; j < up.cols(); ++j) gx(j, i) += up(i, j);
                  });
}

Var relu(Var a) {
  return unary(OpKind::kRelu, a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  return unary(OpKind::kGelu, a, [](double x) { return x * normal_cdf(x); },
               [](double x, double) { return normal_cdf(x) + x * normal_pdf(x); });
}

Var sigmoid(Var a) {
  return unary(OpKind::kSigmoid, a,
               [](double x) {
                 if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(OpKind::kTanh, a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var softmax_rows(Var a) {
  Graph& g = *a.graph();
  Tensor y = softmax_rows(a.value());
  return g.record(OpKind::kSoftmax, std::move(y), {a.id()},
                  [](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& y = g.value(self);
                    const Tensor& up = g.upstream(self);
                    Tensor& gx = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < y.rows(); ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < y.cols(); ++j) dot += up(i, j) * y(i, j);
                      for (std::size_t j = 0; j < y.cols(); ++j)
                        gx(i, j) += y(i, j) * (up(i, j) - dot);
                    }
                  });
}

Var layer_norm_rows(Var a, double eps) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y(x.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) y(i, j) = (x(i, j) - mu) * inv_std[i];
  }
  return g.record(OpKind::kLayerNorm, std::move(y), {a.id()},
                  [inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& y = g.value(self);
                    const Tensor& up = g.upstream(self);
                    Tensor& gx = g.grad_buffer(pid);
                    const double n = static_cast<double>(y.cols());
                    for (std::size_t i = 0; i < y.rows(); ++i) {
                      double mean_up = 0.0, mean_upy = 0.0;
                      for (std::size_t j = 0; j < y.cols(); ++j) {
                        mean_up += up(i, j);
                        mean_upy += up(i, j) * y(i, j);
                      }
                      mean_up /= n;
                      mean_upy /= n;
                      for (std::size_t j = 0; j < y.cols(); ++j)
                        gx(i, j) += inv_std[i] * (up(i, j) - mean_up - y(i, j) * mean_upy);
                    }
                  });
}

Var embedding(Var table, std::span<const std::size_t> indices) {
  Graph& g = *table.graph();
  const Tensor& t = table.value();
  const std::size_t c = t.cols();
  Tensor out = matrix_like(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) {
      throw std::invalid_argument("embedding-lookup: index " + std::to_string(indices[i]) +
                                  " out of table " + shape_string(t.shape()));
    }
    std::copy_n(t.row_span(indices[i]).begin(), c, out.row_span(i).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return g.record(OpKind::kEmbedding, std::move(out), {table.id()},
                  [idx = std::move(idx)](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& up = g.upstream(self);
                    Tensor& gt = g.grad_buffer(pid);
                    const std::size_t c = up.cols();
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      for (std::size_t j = 0; j < c; ++j) gt(idx[i], j) += up(i, j);
                  });
}

Var sum(Var a) {
  Graph& g = *a.graph();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return g.record(OpKind::kSum, Tensor::scalar(s), {a.id()},
                  [](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const double up = g.upstream(self)[0];
                    for (auto& v : g.grad_buffer(pid).values()) v += up;
                  });
}

Var mean(Var a) {
  Graph& g = *a.graph();
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return g.record(OpKind::kMean, Tensor::scalar(s / n), {a.id()},
                  [n](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const double up = g.upstream(self)[0] / n;
                    for (auto& v : g.grad_buffer(pid).values()) v += up;
                  });
}

Var mean_rows(Var a) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (r == 0) throw std::invalid_argument("mean-rows: empty tensor");
  Tensor out = matrix_like(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x(i, j);
  for (auto& v : out.values()) v /= static_cast<double>(r);
  return g.record(OpKind::kMeanRows, std::move(out), {a.id()},
                  [r](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& up = g.upstream(self);
                    Tensor& gx = g.grad_buffer(pid);
                    const std::size_t c = up.cols();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        gx(i, j) += up[j] / static_cast<double>(r);
                  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  Graph& g = *logits.graph();
  const Tensor& z = logits.value();
  if (targets.size() != z.rows()) {
    throw std::invalid_argument("cross-entropy: " + std::to_string(targets.size()) +
                                " targets for logits " + shape_string(z.shape()));
  }
  Tensor p = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (targets[i] >= z.cols()) {
      throw std::invalid_argument("cross-entropy: target out of range");
    }
    loss += log_sum_exp(z.row_span(i)) - z(i, targets[i]);
  }
  const double n = static_cast<double>(z.rows());
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return g.record(OpKind::kCrossEntropy, Tensor::scalar(loss / n), {logits.id()},
                  [p = std::move(p), t = std::move(t), n](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const double up = g.upstream(self)[0] / n;
                    Tensor& gz = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < p.rows(); ++i)
                      for (std::size_t j = 0; j < p.cols(); ++j)
                        gz(i, j) += up * (p(i, j) - (j == t[i] ? 1.0 : 0.0));
                  });
}

Var binary_cross_entropy(Var logits, const Tensor& targets) {
  Graph& g = *logits.graph();
  const Tensor& z = logits.value();
  if (targets.size() != z.size()) shape_error("binary-cross-entropy", z, targets);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x = z[i];
    loss += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const double n = static_cast<double>(z.size());
  return g.record(OpKind::kBinaryCrossEntropy, Tensor::scalar(loss / n), {logits.id()},
                  [targets, n](Graph& g, std::size_t self) {
                    const auto pid = g.parents(self)[0];
                    const Tensor& z = g.value(pid);
                    const double up = g.upstream(self)[0] / n;
                    Tensor& gz = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < z.size(); ++i) {
                      const double s = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                                 : std::exp(z[i]) / (1.0 + std::exp(z[i]));
                      gz[i] += up * (s - targets[i]);
                    }
                  });
}

Var stop_gradient(Var a) {
  Graph& g = *a.graph();
  // Recorded with no parents: nothing upstream of it can receive gradient.
  return g.record(OpKind::kStopGradient, a.value(), {}, {});
}

Var gru_cell(Var x, Var h, const GruWeights& w) {
  Var z = sigmoid(add(add(matmul(x, w.w_z), matmul(h, w.u_z)), w.b_z));
  Var r = sigmoid(add(add(matmul(x, w.w_r), matmul(h, w.u_r)), w.b_r));
  Var n = tanh(add(add(matmul(x, w.w_n), mul(r, matmul(h, w.u_n))), w.b_n));
  return add(n, mul(z, sub(h, n)));
}

Var forward_op(OpKind kind, std::span<const Var> in) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: need(2); return matmul(in[0], in[1]);
    case OpKind::kAdd: need(2); return add(in[0], in[1]);
    case OpKind::kSub: need(2); return sub(in[0], in[1]);
    case OpKind::kMul: need(2); return mul(in[0], in[1]);
    case OpKind::kConcat: return concat_cols(in);
    case OpKind::kTranspose: need(1); return transpose(in[0]);
    case OpKind::kRelu: need(1); return relu(in[0]);
    case OpKind::kGelu: need(1); return gelu(in[0]);
    case OpKind::kSigmoid: need(1); return sigmoid(in[0]);
    case OpKind::kTanh: need(1); return tanh(in[0]);
    case OpKind::kSoftmax: need(1); return softmax_rows(in[0]);
    case OpKind::kLayerNorm: need(1); return layer_norm_rows(in[0]);
    case OpKind::kMean: need(1); return mean(in[0]);
    case OpKind::kSum: need(1); return sum(in[0]);
    case OpKind::kMeanRows: need(1); return mean_rows(in[0]);
    case OpKind::kStopGradient: need(1); return stop_gradient(in[0]);
    case OpKind::kEmbedding: {
      need(2);
      const auto idx = to_indices(in[1].value());
      return embedding(in[0], idx);
    }
    case OpKind::kCrossEntropy: {
      need(2);
      const auto idx = to_indices(in[1].value());
      return cross_entropy(in[0], idx);
    }
    case OpKind::kBinaryCrossEntropy:
      need(2);
      return binary_cross_entropy(in[0], in[1].value());
    case OpKind::kGruCell:
      need(11);
      return gru_cell(in[0], in[1],
                      GruWeights{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9], in[10]});
    default:
      throw std::invalid_argument(std::string("forward_op: '") + op_name(kind) +
                                  "' needs non-tensor arguments; call it directly");
  }
}

}  // namespace dsgg::numerics
