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

#include "dsgg/sia/sia.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dsgg::sia {

Tensor position_input(std::span<const scene::Box> boxes, double frame_w, double frame_h) {
  if (!(frame_w > 0 && frame_h > 0)) throw std::invalid_argument("position_input: frame size must be positive");
  const double side = std::max(frame_w, frame_h);
  Tensor out({boxes.size(), 4});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out(i, 0) = boxes[i].x;
    out(i, 1) = boxes[i].y;
    out(i, 2) = frame_w / side;
    out(i, 3) = frame_h / side;
  }
  return out;
}

PositionMlp::PositionMlp(std::size_t hidden, std::size_t out, numerics::Rng& rng)
    : mlp("sia.pos", 4, hidden, out, rng) {}

Var PositionMlp::embed(Graph& g, Var f_d, const Tensor& positions) {
  if (positions.rows() != f_d.rows() || positions.cols() != 4) {
    throw std::invalid_argument("embed_position: " + std::to_string(f_d.rows()) + " features but positions " +
                                numerics::shape_string(positions.shape()));
  }
  Var parts[2] = {f_d, mlp(g, g.constant(positions))};
  return numerics::concat_cols(parts);
}

namespace {

double distance(const Tensor& pts, std::size_t i, std::size_t j) {
  double d = 0.0;
  auto a = pts.row_span(i), b = pts.row_span(j);
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(d);
}

}  // namespace

double median_pairwise_distance(const Tensor& points) {
  std::vector<double> d;
  for (std::size_t i = 0; i < points.rows(); ++i)
    for (std::size_t j = i + 1; j < points.rows(); ++j) d.push_back(distance(points, i, j));
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  const std::size_t h = d.size() / 2;
  return d.size() % 2 ? d[h] : 0.5 * (d[h - 1] + d[h]);
}

Connectivity cluster(const Tensor& points, std::optional<double> threshold) {
  const std::size_t n = points.rows();
  if (n == 0) throw std::invalid_argument("cluster: no points");
  Connectivity out;
  out.threshold = threshold ? *threshold : median_pairwise_distance(points);

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = distance(points, i, j);

  // Active clusters kept sorted by lowest member.
  std::vector<std::vector<std::size_t>> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
  std::vector<std::vector<std::size_t>> cut = clusters;

  while (clusters.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double s = 0.0;
        for (std::size_t u : clusters[a])
          for (std::size_t v : clusters[b]) s += dist[u][v];
        s /= double(clusters[a].size() * clusters[b].size());
        if (s < best) {
          best = s;
          bi = a;
          bj = b;
        }
      }
    }
    out.merges.push_back({clusters[bi], clusters[bj], best});
    std::vector<std::size_t> merged = clusters[bi];
    merged.insert(merged.end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(merged.begin(), merged.end());
    clusters[bi] = std::move(merged);
    clusters.erase(clusters.begin() + std::ptrdiff_t(bj));
    if (best <= out.threshold) cut = clusters;
  }
  // Average linkage is monotone, so merges below the cut form a prefix.

  out.labels.assign(n, 0);
  out.adjacency = Tensor({n, n});
  for (std::size_t c = 0; c < cut.size(); ++c) {
    for (std::size_t u : cut[c]) {
      out.labels[u] = c;
      for (std::size_t v : cut[c]) out.adjacency(u, v) = 1.0;
    }
    if (c > 0) {
      const std::size_t r0 = cut[c - 1].front(), r1 = cut[c].front();
      out.adjacency(r0, r1) = out.adjacency(r1, r0) = 1.0;
    }
  }
  return out;
}

Tensor normalize_adjacency(const Tensor& adjacency) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) throw std::invalid_argument("normalize_adjacency: matrix not square");
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += adjacency(i, j);
    if (!(deg > 0.0)) throw std::invalid_argument("normalize_adjacency: node without edges");
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * adjacency(i, j) * inv_sqrt[j];
  return out;
}

GcnFuser::GcnFuser(std::size_t in, std::size_t out, numerics::Rng& rng)
    : first("sia.gcn1", in, out, rng), second("sia.gcn2", out, out, rng) {}

Var GcnFuser::fuse(Graph& g, Var nodes, const Tensor& adjacency) {
  if (adjacency.rows() != nodes.rows()) {
    throw std::invalid_argument("fuse: adjacency " + numerics::shape_string(adjacency.shape()) + " for " +
                                std::to_string(nodes.rows()) + " nodes");
  }
  Var a_hat = g.constant(normalize_adjacency(adjacency));
  Var h = numerics::gelu(first(g, numerics::matmul(a_hat, nodes)));
  h = second(g, numerics::matmul(a_hat, h));
  return numerics::mean_rows(h);
}

numerics::ParameterList GcnFuser::parameters() {
  return numerics::concat_params({first.parameters(), second.parameters()});
}

Sia::Sia(const SiaConfig& cfg, numerics::Rng& rng)
    : config(cfg),
      position(cfg.pos_hidden, cfg.pos_dim, rng),
      gcn(cfg.latent + cfg.pos_dim, cfg.latent, rng) {}

FrameTokenResult Sia::frame_token(Graph& g, Var f_d, std::span<const scene::Box> boxes, double frame_w,
                                  double frame_h) {
  FrameTokenResult r;
  r.augmented = position.embed(g, f_d, position_input(boxes, frame_w, frame_h));
  std::optional<double> theta;
  if (config.threshold >= 0.0) theta = config.threshold;
  r.connectivity = cluster(r.augmented.value(), theta);
  r.token = gcn.fuse(g, r.augmented, r.connectivity.adjacency);
  return r;
}

numerics::ParameterList Sia::parameters() {
  return numerics::concat_params({position.parameters(), gcn.parameters()});
}

}  // namespace dsgg::sia
