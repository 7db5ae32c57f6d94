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

#ifndef DSGG_SIA_SIA_HPP_
#define DSGG_SIA_SIA_HPP_

#include <optional>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/checkpoint.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/scene/scene.hpp"

namespace dsgg::sia {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

struct SiaConfig {
  std::size_t latent = 32;      // l
  std::size_t pos_hidden = 16;
  std::size_t pos_dim = 8;      // p
  // Cut height; negative means the median pairwise distance of the frame.
  double threshold = -1.0;
};

// MLP input per object: [x_n, y_n, w, h] with (x_n, y_n) the box center and
// (w, h) the frame size, scaled by its longer side.
Tensor position_input(std::span<const scene::Box> boxes, double frame_w, double frame_h);

class PositionMlp {
 public:
  PositionMlp() = default;
  PositionMlp(std::size_t hidden, std::size_t out, numerics::Rng& rng);

  // f_d (n x l) -> f_d ⊕ MLP(position) (n x (l + p)).
  Var embed(Graph& g, Var f_d, const Tensor& positions);
  numerics::ParameterList parameters() { return mlp.parameters(); }

  numerics::Mlp mlp;
};

struct Merge {
  std::vector<std::size_t> left;   // members, ascending
  std::vector<std::size_t> right;  // members, ascending; left[0] < right[0]
  double height = 0.0;             // average linkage distance
};

struct Connectivity {
  Tensor adjacency;                // n x n, symmetric, unit diagonal
  std::vector<std::size_t> labels; // cluster id per object, numbered by lowest member
  std::vector<Merge> merges;       // full agglomeration order, n - 1 entries
  double threshold = 0.0;
};

double median_pairwise_distance(const Tensor& points);

// Agglomerative average-linkage clustering on Euclidean distances. At each
// step the pair of clusters with the smallest average distance merges; ties go
// to the pair whose lowest members are lexicographically smallest. Clusters
// are the groups formed by merges of height <= threshold. Adjacency is 1
// within a cluster and on the diagonal, plus a chain of edges linking the
// cluster representatives (lowest member) in ascending order.
Connectivity cluster(const Tensor& points, std::optional<double> threshold = std::nullopt);

// D^{-1/2} A D^{-1/2} for an adjacency that already has self-loops.
Tensor normalize_adjacency(const Tensor& adjacency);

// Two graph convolutions (GELU between), mean readout.
class GcnFuser {
 public:
  GcnFuser() = default;
  GcnFuser(std::size_t in, std::size_t out, numerics::Rng& rng);

  // nodes: n x in. Returns 1 x out.
  Var fuse(Graph& g, Var nodes, const Tensor& adjacency);
  numerics::ParameterList parameters();

  numerics::Linear first;
  numerics::Linear second;
};

struct FrameTokenResult {
  Var token;       // 1 x l
  Var augmented;   // F_d^+ (n x (l + p))
  Connectivity connectivity;
};

class Sia {
 public:
  Sia() = default;
  Sia(const SiaConfig& cfg, numerics::Rng& rng);

  FrameTokenResult frame_token(Graph& g, Var f_d, std::span<const scene::Box> boxes, double frame_w,
                               double frame_h);
  numerics::ParameterList parameters();

  SiaConfig config;
  PositionMlp position;
  GcnFuser gcn;
};

}  // namespace dsgg::sia

#endif  // DSGG_SIA_SIA_HPP_
