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

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "dsgg/numerics/gradcheck.hpp"
#include "dsgg/numerics/rng.hpp"
#include "dsgg/sia/sia.hpp"

namespace dsgg::sia {
namespace {

using numerics::Rng;

TEST(PositionMlp, ZeroWeightsGiveBiasTail) {
  Rng rng(1);
  PositionMlp pos(16, 8, rng);
  pos.mlp.second.weight.value.fill(0.0);
  for (std::size_t j = 0; j < 8; ++j) pos.mlp.second.bias.value(0, j) = 0.1 * double(j);
  std::vector<scene::Box> boxes{{0.1, 0.9, 0.2, 0.2}, {0.7, 0.3, 0.05, 0.1}};
  Graph g;
  Var f = g.constant(rng.normal_tensor({2, 32}, 1.0));
  Var out = pos.embed(g, f, position_input(boxes, 640, 480));
  ASSERT_EQ(out.cols(), 40u);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(out.value()(i, j), f.value()(i, j));
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(out.value()(i, 32 + j), 0.1 * double(j));
  }
}

TEST(PositionMlp, InputUsesCenterAndFrameSize) {
  std::vector<scene::Box> boxes{{0.25, 0.75, 0.1, 0.3}};
  Tensor p = position_input(boxes, 640, 480);
  EXPECT_EQ(p(0, 0), 0.25);
  EXPECT_EQ(p(0, 1), 0.75);
  EXPECT_EQ(p(0, 2), 1.0);
  EXPECT_EQ(p(0, 3), 0.75);
}

TEST(PositionMlp, RejectsRowMismatch) {
  Rng rng(2);
  PositionMlp pos(16, 8, rng);
  Graph g;
  std::vector<scene::Box> boxes(3);
  EXPECT_THROW(pos.embed(g, g.constant(Tensor({2, 4})), position_input(boxes, 1, 1)), std::invalid_argument);
}

TEST(PositionMlp, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    Rng rng(10 + s);
    PositionMlp pos(5, 3, rng);
    std::vector<scene::Box> boxes{{0.1, 0.2, 0.1, 0.1}, {0.6, 0.4, 0.2, 0.3}, {0.9, 0.8, 0.1, 0.1}};
    Tensor f = rng.normal_tensor({3, 4}, 1.0);
    Tensor w = rng.normal_tensor({3, 7}, 1.0);
    auto rep = numerics::check_gradients(
        [&](Graph& g) {
          Var e = pos.embed(g, g.constant(f), position_input(boxes, 320, 240));
          return numerics::sum(numerics::mul(numerics::tanh(e), g.constant(w)));
        },
        pos.parameters());
    EXPECT_TRUE(rep.passed) << rep.worst_param << " " << rep.worst_rel_error;
  }
}

// Exhaustive reference: recompute every inter-cluster average from scratch.
std::vector<Merge> reference_linkage(const Tensor& pts) {
  const std::size_t n = pts.rows();
  std::vector<std::vector<std::size_t>> parts;
  for (std::size_t i = 0; i < n; ++i) parts.push_back({i});
  auto dist = [&](std::size_t a, std::size_t b) {
    long double s = 0;
    for (std::size_t k = 0; k < pts.cols(); ++k) {
      long double d = pts(a, k) - pts(b, k);
      s += d * d;
    }
    return std::sqrt(s);
  };
  std::vector<Merge> merges;
  while (parts.size() > 1) {
    struct Cand {
      long double avg;
      std::size_t a, b;
    };
    std::vector<Cand> cands;
    for (std::size_t a = 0; a < parts.size(); ++a)
      for (std::size_t b = 0; b < parts.size(); ++b) {
        if (parts[a][0] >= parts[b][0]) continue;
        long double s = 0;
        for (auto u : parts[a])
          for (auto v : parts[b]) s += dist(u, v);
        cands.push_back({s / (long double)(parts[a].size() * parts[b].size()), a, b});
      }
    auto key = [&](const Cand& c) { return std::make_tuple(c.avg, parts[c.a][0], parts[c.b][0]); };
    auto best = *std::min_element(cands.begin(), cands.end(),
                                  [&](const Cand& x, const Cand& y) { return key(x) < key(y); });
    merges.push_back({parts[best.a], parts[best.b], double(best.avg)});
    std::vector<std::size_t> m = parts[best.a];
    m.insert(m.end(), parts[best.b].begin(), parts[best.b].end());
    std::sort(m.begin(), m.end());
    std::size_t hi = std::max(best.a, best.b), lo = std::min(best.a, best.b);
    parts.erase(parts.begin() + std::ptrdiff_t(hi));
    parts[lo] = m;
    std::sort(parts.begin(), parts.end());
  }
  return merges;
}

void expect_same_merges(const std::vector<Merge>& got, const std::vector<Merge>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].left, want[i].left) << "merge " << i;
    EXPECT_EQ(got[i].right, want[i].right) << "merge " << i;
    EXPECT_NEAR(got[i].height, want[i].height, 1e-12);
  }
}

TEST(Cluster, MergeOrderMatchesExhaustiveReference) {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    Tensor pts = rng.normal_tensor({n, 1 + rng.below(5)}, 1.0);
    expect_same_merges(cluster(pts).merges, reference_linkage(pts));
  }
}

// Integer points on a line give exact distance ties.
TEST(Cluster, MergeOrderMatchesReferenceWithTies) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    Tensor pts({n, 1});
    for (std::size_t i = 0; i < n; ++i) pts(i, 0) = double(rng.below(6));
    expect_same_merges(cluster(pts).merges, reference_linkage(pts));
  }
}

TEST(Cluster, CoincidentPointsFormOneCluster) {
  Tensor pts({2, 3}, 0.5);
  Connectivity c = cluster(pts);
  EXPECT_EQ(c.labels, (std::vector<std::size_t>{0, 0}));
  for (double v : c.adjacency.values()) EXPECT_EQ(v, 1.0);
}

TEST(Cluster, ZeroThresholdGivesSingletonsAndChain) {
  Rng rng(3);
  Tensor pts = rng.normal_tensor({5, 4}, 1.0);
  Connectivity c = cluster(pts, 0.0);
  EXPECT_EQ(c.labels, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const bool edge = i == j || (i > j ? i - j : j - i) == 1;
      EXPECT_EQ(c.adjacency(i, j), edge ? 1.0 : 0.0) << i << "," << j;
    }
}

TEST(Cluster, SinglePointHasSelfLoop) {
  Connectivity c = cluster(Tensor({1, 3}, 2.0));
  EXPECT_EQ(c.adjacency, Tensor({1, 1}, 1.0));
  EXPECT_TRUE(c.merges.empty());
}

TEST(Cluster, AdjacencySymmetricAndConnected) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    Connectivity c = cluster(rng.normal_tensor({n, 3}, 1.0));
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v)
        if (c.adjacency(u, v) == 1.0 && !seen[v]) seen[v] = true, stack.push_back(v);
    }
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_TRUE(seen[i]);
      EXPECT_EQ(c.adjacency(i, i), 1.0);
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(c.adjacency(i, j), c.adjacency(j, i));
    }
  }
}

TEST(Cluster, InvariantToTranslation) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    Tensor pts = rng.normal_tensor({n, 3}, 1.0);
    Tensor moved = pts;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 3; ++k) moved(i, k) += 0.375 * double(k + 1);
    Connectivity a = cluster(pts), b = cluster(moved);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.adjacency, b.adjacency);
    for (std::size_t i = 0; i < a.merges.size(); ++i) EXPECT_EQ(a.merges[i].left, b.merges[i].left);
  }
}

TEST(Cluster, MedianThresholdDefault) {
  Tensor pts({3, 1});
  pts(1, 0) = 1.0;
  pts(2, 0) = 3.0;  // distances 1, 2, 3
  EXPECT_DOUBLE_EQ(median_pairwise_distance(pts), 2.0);
  Connectivity c = cluster(pts);
  EXPECT_EQ(c.labels, (std::vector<std::size_t>{0, 0, 1}));
}

TEST(NormalizedAdjacency, SymmetricWithUnitSpectralRadius) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    Tensor a = cluster(rng.normal_tensor({n, 3}, 1.0), rng.uniform(0.0, 3.0)).adjacency;
    Tensor h = normalize_adjacency(a);
    // Perron vector of D^{-1/2} A D^{-1/2} is D^{1/2} 1 with eigenvalue 1.
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) s[i] += a(i, j);
      s[i] = std::sqrt(s[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double hs = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(h(i, j), h(j, i));
        EXPECT_GE(h(i, j), 0.0);
        hs += h(i, j) * s[j];
      }
      EXPECT_NEAR(hs, s[i], 1e-12);
    }
    // Power iteration: ||H^k x|| never grows.
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    double norm = 0.0;
    for (double v : x) norm += v * v;
    for (int it = 0; it < 50; ++it) {
      std::vector<double> y(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i] += h(i, j) * x[j];
      double ny = 0.0;
      for (double v : y) ny += v * v;
      EXPECT_LE(ny, norm * (1.0 + 1e-12));
      x = y;
      norm = ny;
    }
  }
}

TEST(NormalizedAdjacency, RowSumsCanExceedOneOnStarGraph) {
  Tensor a({4, 4});
  for (std::size_t i = 0; i < 4; ++i) {
    a(i, i) = 1.0;
    a(0, i) = a(i, 0) = 1.0;
  }
  Tensor h = normalize_adjacency(a);
  double row0 = 0.0;
  for (std::size_t j = 0; j < 4; ++j) row0 += h(0, j);
  EXPECT_NEAR(row0, 0.25 + 3.0 / std::sqrt(8.0), 1e-12);
  EXPECT_GT(row0, 1.0);
}

TEST(Gcn, SingleNodeIsTwoLayerMap) {
  Rng rng(8);
  GcnFuser gcn(6, 4, rng);
  Tensor f = rng.normal_tensor({1, 6}, 1.0);
  Graph g;
  Var token = gcn.fuse(g, g.constant(f), Tensor({1, 1}, 1.0));
  Graph g2;
  Var direct = gcn.second(g2, numerics::gelu(gcn.first(g2, g2.constant(f))));
  EXPECT_EQ(token.value(), direct.value());
}

// Two connected nodes: A_hat = [[.5,.5],[.5,.5]], so both rows of A_hat X are
// the node mean; with identity weights and zero bias the token is
// gelu(mean) per coordinate.
TEST(Gcn, TwoNodesMatchHandComputation) {
  Rng rng(9);
  GcnFuser gcn(2, 2, rng);
  gcn.first.weight.value = Tensor::matrix({{1, 0}, {0, 1}});
  gcn.second.weight.value = Tensor::matrix({{2, 0}, {0, -1}});
  gcn.second.bias.value = Tensor::matrix({{0.5, 0.25}});
  Tensor f = Tensor::matrix({{1.0, -2.0}, {3.0, 0.0}});
  Graph g;
  Var token = gcn.fuse(g, g.constant(f), Tensor({2, 2}, 1.0));
  auto gelu = [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); };
  EXPECT_NEAR(token.value()(0, 0), 2.0 * gelu(2.0) + 0.5, 1e-14);
  EXPECT_NEAR(token.value()(0, 1), -gelu(-1.0) + 0.25, 1e-14);
}

TEST(Gcn, PermutationInvariant) {
  Rng rng(10);
  GcnFuser gcn(12, 8, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    Tensor f = rng.normal_tensor({n, 12}, 1.0);
    Tensor a = cluster(f).adjacency;
    auto perm = rng.permutation(n);
    Tensor pf({n, 12}), pa({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 12; ++k) pf(i, k) = f(perm[i], k);
      for (std::size_t j = 0; j < n; ++j) pa(i, j) = a(perm[i], perm[j]);
    }
    Graph g;
    Tensor t1 = gcn.fuse(g, g.constant(f), a).value();
    Tensor t2 = gcn.fuse(g, g.constant(pf), pa).value();
    for (std::size_t k = 0; k < t1.size(); ++k) EXPECT_LT(std::abs(t1[k] - t2[k]), 1e-10);
  }
}

TEST(Gcn, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    Rng rng(20 + s);
    GcnFuser gcn(5, 3, rng);
    Tensor f = rng.normal_tensor({4, 5}, 1.0);
    Tensor a = cluster(f).adjacency;
    Tensor w = rng.normal_tensor({1, 3}, 1.0);
    auto rep = numerics::check_gradients(
        [&](Graph& g) { return numerics::sum(numerics::mul(gcn.fuse(g, g.constant(f), a), g.constant(w))); },
        gcn.parameters());
    EXPECT_TRUE(rep.passed) << rep.worst_param << " " << rep.worst_rel_error;
  }
}

TEST(Sia, FrameTokenShape) {
  Rng rng(11);
  Sia sia(SiaConfig{}, rng);
  std::vector<scene::Box> boxes{{0.5, 0.5, 0.2, 0.4}, {0.2, 0.3, 0.1, 0.1}, {0.8, 0.9, 0.1, 0.1}};
  Graph g;
  auto r = sia.frame_token(g, g.constant(rng.normal_tensor({3, 32}, 1.0)), boxes, 640, 480);
  EXPECT_EQ(r.token.rows(), 1u);
  EXPECT_EQ(r.token.cols(), 32u);
  EXPECT_EQ(r.augmented.cols(), 40u);
  EXPECT_EQ(r.connectivity.labels.size(), 3u);
}

}  // namespace
}  // namespace dsgg::sia
