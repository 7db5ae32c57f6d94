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

#ifndef DSGG_OTVOCAB_TRANSPORT_HPP_
#define DSGG_OTVOCAB_TRANSPORT_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsgg/numerics/tensor.hpp"

namespace dsgg::otvocab {

using numerics::Tensor;

// Plans and costs are m x s: rows index learned units u_i, columns index new
// units u_j^+. Row sums are P(u_i), column sums are P(u_j^+).

struct EntropyParts {
  double marginal = 0.0;     // -sum_j q_j log q_j, q_j = sum_i P(i, j)
  double joint = 0.0;        // -sum P log P
  double conditional = 0.0;  // sum P(i, j) (-log P(u_i | u_j^+))
};

// Throws std::invalid_argument on negative or non-finite mass. Zero entries
// contribute nothing (0 log 0 = 0).
EntropyParts codebook_entropy(const Tensor& plan);
double shannon_entropy(std::span<const double> p);

// Plan that sends all mass of learned unit i to new unit assignment[i].
Tensor merge_plan(std::span<const double> freqs, std::span<const std::size_t> assignment, std::size_t s);

struct SinkhornOptions {
  double epsilon = 0.1;
  std::size_t max_iter = 5000;
  double tol = 1e-11;  // L1 row-marginal violation
};

struct SinkhornResult {
  Tensor plan;
  bool converged = false;
  std::size_t iterations = 0;
  double marginal_error = 0.0;
  // Dual objective eps * sum exp((f_i + g_j - D_ij) / eps) - <f, r> - <g, c>
  // after each iteration. Each half-step minimizes it exactly over one block,
  // so the trace never increases; at the optimum its negation equals the
  // regularized primal value <P, D> - eps H(P) (up to the constant eps).
  std::vector<double> dual_trace;
};

// Log-domain Sinkhorn. Zero-mass rows or columns get zero plan entries.
// Throws on invalid marginals or eps <= 0; non-convergence is reported
// through `converged` with the last iterate returned.
SinkhornResult sinkhorn(const Tensor& cost, std::span<const double> r, std::span<const double> c,
                        const SinkhornOptions& opts = {});

// <P, D> - eps H(P).
double regularized_cost(const Tensor& plan, const Tensor& cost, double eps);

struct RefinedCodebook {
  Tensor units;                              // s x l
  std::vector<double> marginals;             // P(u_j^+), from the hard assignment
  std::vector<std::size_t> assignment;       // learned unit -> new unit (nearest transport-weighted center)
  std::vector<std::vector<std::size_t>> members;  // new unit -> learned units
  std::vector<std::vector<double>> weights;  // convex weights matching members
  Tensor plan;                               // final soft plan, m x s

  std::size_t size() const { return units.rows(); }
  double entropy() const { return shannon_entropy(marginals); }
};

struct RefineOptions {
  double epsilon = 0.1;
  double anneal = 0.5;
  std::size_t max_rounds = 10;
  double tol = 1e-6;
  double temperature_scale = 0.1;  // T = scale * mean squared pairwise unit distance
  double prob_floor = 1e-12;
  SinkhornOptions sinkhorn{0.1, 3000, 1e-10};
};

struct RefineResult {
  RefinedCodebook codebook;
  // H(P) + <P, D> (the merge objective with the non-negative cost) of every
  // accepted round. A round that would raise it is rejected and ends the
  // loop, so the trace is non-increasing.
  std::vector<double> objective_trace;
  std::size_t rounds = 0;
};

// Deterministic k-means++ style seeding: the most frequent unit first, then
// repeatedly the unit maximizing freq * (squared distance to nearest seed).
std::vector<std::size_t> seed_units(const Tensor& units, std::span<const double> freqs, std::size_t s);

// Cost D(i, j) = -log max(P(u_i | e_j), floor) with
// P(u_i | e_j) = softmax_i(-||c_i - e_j||^2 / T).
Tensor conditional_cost(const Tensor& units, const Tensor& centers, double temperature, double floor);

// Alternates (cost from current centers) -> Sinkhorn with uniform column
// marginal -> centers as transport-weighted averages, annealing eps.
// The returned units are frequency-weighted means of the hard members (the
// transport-weighted mean for a new unit that receives no member).
RefineResult refine_step(const Tensor& units, std::span<const double> freqs, std::size_t s,
                         const RefineOptions& opts = {});

enum class SweepOrder { kAscending, kDescending };

struct SweepRow {
  std::size_t k = 0;
  std::size_t size = 0;
  double entropy = 0.0;
  double delta = 0.0;
};

struct UpdateResult {
  RefinedCodebook codebook;
  std::size_t chosen_k = 0;  // 0 means the learned codebook itself
  bool fallback = false;
  std::vector<SweepRow> rows;  // k = 0 row is the learned codebook
};

// Algorithm 1 stopping rule. delta[k-1] holds dH_k for k = 1..K and dH_0 is
// +inf. Returns the first k with dH_k > dH_{k-1} minus one, or K when the
// sweep never stops.
std::size_t sweep_stop_index(std::span<const double> delta);

// Algorithm 1. Ascending sizes k * ds for k = 1..floor(m / ds); descending
// sizes m - k * ds while positive.
UpdateResult update_codebook(const Tensor& units, std::span<const double> freqs, std::size_t ds,
                             SweepOrder order = SweepOrder::kAscending, const RefineOptions& opts = {});

// Frequency-weighted Lloyd k-means over the learned units, seeded with
// seed_units. Stand-in for the OT merge in the clustering ablation.
RefinedCodebook kmeans_codebook(const Tensor& units, std::span<const double> freqs, std::size_t s,
                                std::size_t iterations = 50);

}  // namespace dsgg::otvocab

#endif  // DSGG_OTVOCAB_TRANSPORT_HPP_
