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

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/checkpoint.hpp"
#include "dsgg/numerics/gradcheck.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/numerics/optim.hpp"
#include "dsgg/numerics/rng.hpp"

namespace dsgg::numerics {
namespace {

TEST(Ops, MatmulByIdentity) {
  Graph g;
  Var a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var id = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(matmul(a, id).value(), Tensor::matrix({{1, 2}, {3, 4}}));
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Graph g;
  Var s = softmax_rows(g.constant(Tensor::matrix({{0, 0, 0}})));
  for (double v : s.value().values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Ops, CrossEntropyOfConfidentCorrectLogitsIsZero) {
  Graph g;
  Var z = g.constant(Tensor::matrix({{1000, 0, 0}, {0, 0, 1000}}));
  std::vector<std::size_t> t{0, 2};
  EXPECT_EQ(cross_entropy(z, t).value().item(), 0.0);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    Var s = softmax_rows(g.constant(rng.normal_tensor({3, 1 + rng.below(9)}, 5.0)));
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double total = 0.0;
      for (double v : s.value().row_span(i)) total += v;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
}

TEST(Ops, NonFiniteInputRejected) {
  Graph g;
  EXPECT_THROW(g.constant(Tensor::matrix({{1.0, NAN}})), std::domain_error);
  Parameter p("p", Tensor::matrix({{INFINITY}}));
  EXPECT_THROW(g.param(p), std::domain_error);
}

TEST(Backward, ProductRule) {
  Parameter x("x", Tensor::scalar(2.0));
  Parameter y("y", Tensor::scalar(3.0));
  Graph g;
  g.backward(mul(g.param(x), g.param(y)));
  EXPECT_DOUBLE_EQ(x.grad.item(), 3.0);
  EXPECT_DOUBLE_EQ(y.grad.item(), 2.0);
}

TEST(Backward, NonScalarRootRejected) {
  Graph g;
  Parameter p("p", Tensor({2, 2}, 1.0));
  EXPECT_THROW(g.backward(g.param(p)), std::invalid_argument);
}

TEST(Backward, StopGradientIsIdentityForwardAndZeroBackward) {
  Parameter p("p", Tensor::matrix({{1.5, -2.0}}));
  Graph g;
  Var x = g.param(p);
  Var s = stop_gradient(x);
  EXPECT_EQ(s.value(), p.value);
  p.zero_grad();
  g.backward(sum(mul(s, s)));
  for (double v : p.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, FrozenParameterGetsNoGradient) {
  Parameter w("w", Tensor::matrix({{1.0, 2.0}}));
  Parameter b("b", Tensor::matrix({{0.5, 0.5}}));
  b.frozen = true;
  Graph g;
  g.backward(sum(add(g.param(w), g.param(b))));
  for (double v : w.grad.values()) EXPECT_EQ(v, 1.0);
  for (double v : b.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SoftmaxCrossEntropyMatchesFiniteDifferences) {
  Rng rng(11);
  Parameter z("logits", rng.normal_tensor({4, 5}, 1.0));
  std::vector<std::size_t> t{0, 3, 4, 1};
  auto loss = [&](Graph& g) { return cross_entropy(g.param(z), t); };
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  auto report = check_gradients(loss, {&z}, opt);
  EXPECT_TRUE(report.passed) << report.worst_rel_error;
}

// Every differentiable op on random shapes, 12 seeds each.
TEST(Backward, EveryOpMatchesFiniteDifferences) {
  using Builder = std::function<Var(Graph&, std::vector<Parameter>&, Rng&)>;
  struct Case {
    const char* name;
    std::function<void(std::vector<Parameter>&, Rng&)> init;
    Builder build;
  };
  auto mat = [](Rng& r, std::size_t a, std::size_t b, double s = 1.0) {
    return r.normal_tensor({a, b}, s);
  };
  std::vector<Case> cases = {
      {"matmul", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 4, 2)}}; },
       [](Graph& g, auto& p, Rng&) { return matmul(g.param(p[0]), g.param(p[1])); }},
      {"add-row", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 1, 4)}}; },
       [](Graph& g, auto& p, Rng&) { return add(g.param(p[0]), g.param(p[1])); }},
      {"sub", [&](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}, {"b", mat(r, 2, 3)}}; },
       [](Graph& g, auto& p, Rng&) { return sub(g.param(p[0]), g.param(p[1])); }},
      {"mul-row", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 1, 4)}}; },
       [](Graph& g, auto& p, Rng&) { return mul(g.param(p[0]), g.param(p[1])); }},
      {"concat", [&](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}, {"b", mat(r, 2, 2)}}; },
       [](Graph& g, auto& p, Rng&) {
         std::vector<Var> parts{g.param(p[0]), g.param(p[1])};
         return concat_cols(parts);
       }},
      {"concat-rows", [&](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}, {"b", mat(r, 1, 3)}}; },
       [](Graph& g, auto& p, Rng&) {
         std::vector<Var> parts{g.param(p[0]), g.param(p[1])};
         return concat_rows(parts);
       }},
      {"slice", [&](auto& p, Rng& r) { p = {{"a", mat(r, 4, 5)}}; },
       [](Graph& g, auto& p, Rng&) { return slice_rows(slice_cols(g.param(p[0]), 1, 3), 1, 2); }},
      {"transpose", [&](auto& p, Rng& r) { p = {{"a", mat(r, 2, 5)}}; },
       [](Graph& g, auto& p, Rng&) { return transpose(g.param(p[0])); }},
      {"relu", [&](auto& p, Rng& r) {
         Tensor t = mat(r, 3, 3);
         for (auto& v : t.values()) v += v > 0 ? 0.1 : -0.1;  // keep away from the kink
         p = {{"a", t}};
       },
       [](Graph& g, auto& p, Rng&) { return relu(g.param(p[0])); }},
      {"gelu", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 3, 2.0)}}; },
       [](Graph& g, auto& p, Rng&) { return gelu(g.param(p[0])); }},
      {"sigmoid", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 3, 2.0)}}; },
       [](Graph& g, auto& p, Rng&) { return sigmoid(g.param(p[0])); }},
      {"tanh", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 3)}}; },
       [](Graph& g, auto& p, Rng&) { return tanh(g.param(p[0])); }},
      {"softmax", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}}; },
       [](Graph& g, auto& p, Rng&) { return softmax_rows(g.param(p[0])); }},
      {"layernorm", [&](auto& p, Rng& r) { p = {{"a", mat(r, 3, 5)}}; },
       [](Graph& g, auto& p, Rng&) { return layer_norm_rows(g.param(p[0])); }},
      {"embedding", [&](auto& p, Rng& r) { p = {{"t", mat(r, 5, 3)}}; },
       [](Graph& g, auto& p, Rng&) {
         std::vector<std::size_t> idx{4, 0, 4, 2};
         return embedding(g.param(p[0]), idx);
       }},
      {"mean-rows", [&](auto& p, Rng& r) { p = {{"a", mat(r, 4, 3)}}; },
       [](Graph& g, auto& p, Rng&) { return mean_rows(g.param(p[0])); }},
      {"cross-entropy", [&](auto& p, Rng& r) { p = {{"z", mat(r, 3, 4)}}; },
       [](Graph& g, auto& p, Rng&) {
         std::vector<std::size_t> t{1, 0, 3};
         return cross_entropy(g.param(p[0]), t);
       }},
      {"binary-cross-entropy", [&](auto& p, Rng& r) { p = {{"z", mat(r, 3, 4, 2.0)}}; },
       [](Graph& g, auto& p, Rng& r) {
         Tensor y({3, 4});
         for (auto& v : y.values()) v = r.uniform() < 0.5 ? 0.0 : 1.0;
         return binary_cross_entropy(g.param(p[0]), y);
       }},
      {"gru-cell", [&](auto& p, Rng& r) {
         p = {{"x", mat(r, 2, 3)}, {"h", mat(r, 2, 4)}};
         const char* names[] = {"wz", "uz", "bz", "wr", "ur", "br", "wn", "un", "bn"};
         for (int k = 0; k < 9; ++k) {
           const std::size_t rows = (k % 3 == 0) ? 3 : (k % 3 == 1 ? 4 : 1);
           p.emplace_back(names[k], mat(r, rows, 4, 0.5));
         }
       },
       [](Graph& g, auto& p, Rng&) {
         std::vector<Var> in;
         for (auto& q : p) in.push_back(g.param(q));
         return forward_op(OpKind::kGruCell, in);
       }},
  };
  int checked = 0;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      Rng rng(derive_seed(seed, 99));
      std::vector<Parameter> params;
      c.init(params, rng);
      const std::uint64_t inner_seed = rng.below(1u << 30);
      // Random output weighting so every output coordinate matters.
      Tensor weights;
      auto loss = [&](Graph& g) {
        Rng inner(inner_seed);
        Var out = c.build(g, params, inner);
        if (weights.shape() != out.value().shape()) {
          Rng wr(inner_seed + 1);
          weights = wr.normal_tensor(out.value().shape(), 1.0);
        }
        return sum(mul(out, g.constant(weights)));
      };
      ParameterList list;
      for (auto& p : params) list.push_back(&p);
      auto report = check_gradients(loss, list);
      EXPECT_TRUE(report.passed) << c.name << " seed " << seed << " worst "
                                 << report.worst_rel_error << " at " << report.worst_param;
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
}

TEST(AdamW, ZeroGradientZeroDecayIsNoOp) {
  Parameter p("p", Tensor::matrix({{1.0, -2.0}}));
  AdamW opt({&p}, {.lr = 0.1, .weight_decay = 0.0});
  p.zero_grad();
  opt.step();
  EXPECT_EQ(p.value, Tensor::matrix({{1.0, -2.0}}));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  // m_hat = g, v_hat = g^2 after bias correction, so the step is
  // lr * g / (|g| + eps) = 0.1 / (1 + 1e-8).
  Parameter p("p", Tensor::scalar(5.0));
  AdamW opt({&p}, {.lr = 0.1, .weight_decay = 0.0});
  p.grad = Tensor::scalar(1.0);
  opt.step();
  EXPECT_NEAR(p.value.item(), 5.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, DecoupledDecayShrinksParameter) {
  Parameter p("p", Tensor::scalar(2.0));
  AdamW opt({&p}, {.lr = 0.1, .weight_decay = 0.01});
  p.zero_grad();
  opt.step();
  EXPECT_NEAR(p.value.item(), 2.0 - 0.1 * 0.01 * 2.0, 1e-15);
}

TEST(AdamW, ZeroLearningRateIsExactNoOp) {
  Rng rng(3);
  Parameter p("p", rng.normal_tensor({3, 3}, 1.0));
  const Tensor before = p.value;
  AdamW opt({&p}, {.lr = 0.0, .weight_decay = 0.0});
  for (int i = 0; i < 5; ++i) {
    p.grad = rng.normal_tensor({3, 3}, 1.0);
    opt.step();
  }
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(opt.steps(), 5);
}

TEST(AdamW, ShapeMismatchRejected) {
  Parameter p("p", Tensor({2, 2}));
  p.grad = Tensor({3, 1});
  AdamW opt({&p}, {});
  EXPECT_THROW(opt.step(), std::invalid_argument);
}

TEST(GradCheck, QuadraticAtThree) {
  Parameter x("x", Tensor::scalar(3.0));
  auto report = check_gradients([&](Graph& g) {
    Var v = g.param(x);
    return mul(v, v);
  }, {&x});
  EXPECT_TRUE(report.passed);
  EXPECT_NEAR(report.worst_analytic, 6.0, 1e-12);
  EXPECT_NEAR(report.worst_numeric, 6.0, 1e-6);
}

TEST(GradCheck, CorruptedGradientFails) {
  Rng rng(5);
  Parameter w("w", rng.normal_tensor({2, 3}, 1.0));
  auto f = [&]() {
    Graph g;
    return sum(tanh(g.param(w))).value().item();
  };
  zero_grads({&w});
  {
    Graph g;
    g.backward(sum(tanh(g.param(w))));
  }
  Tensor doubled = w.grad;
  for (auto& v : doubled.values()) v *= 2.0;
  EXPECT_TRUE(finite_diff_check(f, {&w}, {w.grad}).passed);
  EXPECT_FALSE(finite_diff_check(f, {&w}, {doubled}).passed);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}

TEST(Checkpoint, RoundTripPreservesBytesAndValues) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Checkpoint c;
    c.seed = rng.below(1000);
    c.config_hash = "abc";
    c.meta["note"] = "x";
    for (int k = 0; k < 3; ++k) {
      c.put("t" + std::to_string(k),
            rng.normal_tensor({1 + rng.below(4), 1 + rng.below(4)}, 1e3));
    }
    const std::string bytes = serialize_checkpoint(c);
    EXPECT_EQ(bytes.substr(0, 8), "SLLMCKPT");
    Checkpoint back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.tensors, c.tensors);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  Checkpoint c;
  c.put("a", Tensor::matrix({{1, 2}}));
  std::string bytes = serialize_checkpoint(c);
  EXPECT_THROW(deserialize_checkpoint("NOTACKPT" + bytes.substr(8)), std::runtime_error);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
}

}  // namespace
}  // namespace dsgg::numerics
