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

#include "dsgg/otvocab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dsgg::otvocab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

void check_distribution(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": negative or non-finite mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": mass does not sum to 1");
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return d;
}

}  // namespace

double shannon_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= xlogx(v);
  return h;
}

EntropyParts codebook_entropy(const Tensor& plan) {
  const std::size_t m = plan.rows(), s = plan.cols();
  std::vector<double> q(s, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      const double v = plan(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("codebook_entropy: negative or non-finite mass");
      q[j] += v;
    }
  EntropyParts e;
  e.marginal = shannon_entropy(q);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      const double v = plan(i, j);
      if (v <= 0.0) continue;
      e.joint -= v * std::log(v);
      e.conditional += v * -std::log(v / q[j]);
    }
  return e;
}

Tensor merge_plan(std::span<const double> freqs, std::span<const std::size_t> assignment, std::size_t s) {
  if (freqs.size() != assignment.size()) throw std::invalid_argument("merge_plan: size mismatch");
  Tensor plan({freqs.size(), s});
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (assignment[i] >= s) throw std::invalid_argument("merge_plan: assignment out of range");
    plan(i, assignment[i]) = freqs[i];
  }
  return plan;
}

double regularized_cost(const Tensor& plan, const Tensor& cost, double eps) {
  double v = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) v += plan[k] * cost[k] + eps * xlogx(plan[k]);
  return v;
}

SinkhornResult sinkhorn(const Tensor& cost, std::span<const double> r, std::span<const double> c,
                        const SinkhornOptions& opts) {
  const std::size_t m = cost.rows(), s = cost.cols();
  if (r.size() != m || c.size() != s) throw std::invalid_argument("sinkhorn: marginal sizes do not match cost");
  if (!(opts.epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  if (!cost.all_finite()) throw std::invalid_argument("sinkhorn: non-finite cost");
  check_distribution(r, "sinkhorn row marginal");
  check_distribution(c, "sinkhorn column marginal");

  const double eps = opts.epsilon;
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < m; ++i)
    if (r[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < s; ++j)
    if (c[j] > 0.0) cols.push_back(j);
  std::vector<double> f(m, -kInf), g(s, -kInf), log_r(m), log_c(s);
  for (std::size_t i : rows) {
    f[i] = 0.0;
    log_r[i] = std::log(r[i]);
  }
  for (std::size_t j : cols) {
    g[j] = 0.0;
    log_c[j] = std::log(c[j]);
  }

  SinkhornResult res;
  res.plan = Tensor({m, s});
  std::vector<double> buf(std::max(m, s));
  auto lse = [&](std::size_t n) {
    double mx = -kInf;
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, buf[k]);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += std::exp(buf[k] - mx);
    return mx + std::log(acc);
  };
  auto dual = [&]() {
    double v = 0.0;
    for (std::size_t i : rows)
      for (std::size_t j : cols) v += eps * std::exp((f[i] + g[j] - cost(i, j)) / eps);
    for (std::size_t i : rows) v -= f[i] * r[i];
    for (std::size_t j : cols) v -= g[j] * c[j];
    return v;
  };

  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    for (std::size_t i : rows) {
      std::size_t n = 0;
      for (std::size_t j : cols) buf[n++] = (g[j] - cost(i, j)) / eps;
      f[i] = eps * (log_r[i] - lse(n));
    }
    for (std::size_t j : cols) {
      std::size_t n = 0;
      for (std::size_t i : rows) buf[n++] = (f[i] - cost(i, j)) / eps;
      g[j] = eps * (log_c[j] - lse(n));
    }
    res.iterations = it + 1;
    res.dual_trace.push_back(dual());
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j : cols)
        if (r[i] > 0.0) row += std::exp((f[i] + g[j] - cost(i, j)) / eps);
      err += std::abs(row - r[i]);
    }
    res.marginal_error = err;
    if (err < opts.tol) {
      res.converged = true;
      break;
    }
  }
  for (std::size_t i : rows)
    for (std::size_t j : cols) res.plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / eps);
  return res;
}

std::vector<std::size_t> seed_units(const Tensor& units, std::span<const double> freqs, std::size_t s) {
  const std::size_t m = units.rows();
  if (s == 0 || s > m) throw std::invalid_argument("seed_units: need 1 <= s <= m");
  std::vector<std::size_t> seeds;
  std::vector<bool> taken(m, false);
  std::size_t first = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (freqs[i] > freqs[first]) first = i;
  seeds.push_back(first);
  taken[first] = true;
  std::vector<double> nearest(m, kInf);
  while (seeds.size() < s) {
    const std::size_t last = seeds.back();
    for (std::size_t i = 0; i < m; ++i)
      nearest[i] = std::min(nearest[i], sq_dist(units.row_span(i), units.row_span(last)));
    // Once every positive score is used up, zero scores fall back to the
    // lowest untaken index.
    std::size_t best = m;
    double best_score = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (taken[i]) continue;
      const double score = freqs[i] * nearest[i];
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    seeds.push_back(best);
    taken[best] = true;
  }
  return seeds;
}

Tensor conditional_cost(const Tensor& units, const Tensor& centers, double temperature, double floor) {
  const std::size_t m = units.rows(), s = centers.rows();
  Tensor cost({m, s});
  std::vector<double> logits(m);
  for (std::size_t j = 0; j < s; ++j) {
    double mx = -kInf;
    for (std::size_t i = 0; i < m; ++i) {
      logits[i] = -sq_dist(units.row_span(i), centers.row_span(j)) / temperature;
      mx = std::max(mx, logits[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < m; ++i) z += std::exp(logits[i] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t i = 0; i < m; ++i) cost(i, j) = -std::max(logits[i] - log_z, std::log(floor));
  }
  return cost;
}

namespace {

double unit_temperature(const Tensor& units, double scale) {
  const std::size_t m = units.rows();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = i + 1; k < m; ++k) {
      total += sq_dist(units.row_span(i), units.row_span(k));
      ++pairs;
    }
  const double t = pairs ? scale * total / double(pairs) : 0.0;
  return t > 0.0 ? t : 1.0;
}

// Transport-weighted mean of the learned units for every column.
Tensor plan_centers(const Tensor& units, const Tensor& plan) {
  const std::size_t m = units.rows(), s = plan.cols(), l = units.cols();
  Tensor centers({s, l});
  for (std::size_t j = 0; j < s; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += plan(i, j);
    for (std::size_t i = 0; i < m; ++i) {
      const double w = col > 0.0 ? plan(i, j) / col : 1.0 / double(m);
      for (std::size_t k = 0; k < l; ++k) centers(j, k) += w * units(i, k);
    }
  }
  return centers;
}

// Each learned unit joins the nearest transport-weighted center. The plan
// argmax is not used: with a uniform column marginal, a heavy cluster must
// spill mass into a neighbouring column.
RefinedCodebook harden(const Tensor& units, std::span<const double> freqs, const Tensor& plan, const Tensor& centers) {
  const std::size_t m = units.rows(), s = plan.cols(), l = units.cols();
  RefinedCodebook cb;
  cb.plan = plan;
  cb.assignment.resize(m);
  cb.members.assign(s, {});
  cb.weights.assign(s, {});
  cb.marginals.assign(s, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    double bd = kInf;
    for (std::size_t j = 0; j < s; ++j) {
      const double d = sq_dist(units.row_span(i), centers.row_span(j));
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    cb.assignment[i] = best;
    cb.members[best].push_back(i);
    cb.marginals[best] += freqs[i];
  }
  cb.units = Tensor({s, l});
  for (std::size_t j = 0; j < s; ++j) {
    const auto& mem = cb.members[j];
    if (mem.empty()) {
      for (std::size_t k = 0; k < l; ++k) cb.units(j, k) = centers(j, k);
      continue;
    }
    for (std::size_t i : mem) {
      const double w = cb.marginals[j] > 0.0 ? freqs[i] / cb.marginals[j] : 1.0 / double(mem.size());
      cb.weights[j].push_back(w);
      for (std::size_t k = 0; k < l; ++k) cb.units(j, k) += w * units(i, k);
    }
  }
  return cb;
}

void check_codebook(const Tensor& units, std::span<const double> freqs) {
  if (units.shape().size() != 2 || units.rows() == 0) throw std::invalid_argument("otvocab: empty codebook");
  if (freqs.size() != units.rows()) throw std::invalid_argument("otvocab: frequency count != codebook size");
  check_distribution(freqs, "otvocab frequencies");
}

}  // namespace

RefineResult refine_step(const Tensor& units, std::span<const double> freqs, std::size_t s, const RefineOptions& opts) {
  check_codebook(units, freqs);
  const std::size_t m = units.rows(), l = units.cols();
  if (s == 0 || s > m) {
    throw std::invalid_argument("refine_step: target size " + std::to_string(s) + " outside [1, " +
                                std::to_string(m) + "]");
  }
  const double temperature = unit_temperature(units, opts.temperature_scale);
  const std::vector<double> col(s, 1.0 / double(s));

  Tensor centers({s, l});
  auto seeds = seed_units(units, freqs, s);
  for (std::size_t j = 0; j < s; ++j) {
    auto src = units.row_span(seeds[j]);
    std::copy(src.begin(), src.end(), centers.row_span(j).begin());
  }

  RefineResult out;
  Tensor best_plan;
  double eps = opts.epsilon;
  for (std::size_t round = 0; round < opts.max_rounds; ++round, eps *= opts.anneal) {
    Tensor cost = conditional_cost(units, centers, temperature, opts.prob_floor);
    SinkhornOptions so = opts.sinkhorn;
    so.epsilon = eps;
    SinkhornResult sk = sinkhorn(cost, freqs, col, so);
    double objective = 0.0;
    for (std::size_t k = 0; k < sk.plan.size(); ++k) objective += sk.plan[k] * cost[k] - xlogx(sk.plan[k]);
    if (!out.objective_trace.empty() && objective > out.objective_trace.back()) break;
    const double previous = out.objective_trace.empty() ? kInf : out.objective_trace.back();
    out.objective_trace.push_back(objective);
    out.rounds = round + 1;
    best_plan = sk.plan;
    if (std::abs(previous - objective) < opts.tol) break;
    for (std::size_t j = 0; j < s; ++j) {
      double mass = 0.0;
      for (std::size_t i = 0; i < m; ++i) mass += sk.plan(i, j);
      if (!(mass > 0.0)) continue;
      for (std::size_t k = 0; k < l; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += sk.plan(i, j) * units(i, k);
        centers(j, k) = acc / mass;
      }
    }
  }
  out.codebook = harden(units, freqs, best_plan, plan_centers(units, best_plan));
  return out;
}

std::size_t sweep_stop_index(std::span<const double> delta) {
  for (std::size_t k = 2; k <= delta.size(); ++k)
    if (delta[k - 1] > delta[k - 2]) return k - 1;
  return delta.size();
}

UpdateResult update_codebook(const Tensor& units, std::span<const double> freqs, std::size_t ds, SweepOrder order,
                             const RefineOptions& opts) {
  check_codebook(units, freqs);
  if (ds == 0) throw std::invalid_argument("update_codebook: increment must be >= 1");
  const std::size_t m = units.rows();
  UpdateResult out;

  RefinedCodebook identity;
  identity.units = units;
  identity.marginals.assign(freqs.begin(), freqs.end());
  identity.plan = Tensor({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    identity.assignment.push_back(i);
    identity.members.push_back({i});
    identity.weights.push_back({1.0});
    identity.plan(i, i) = freqs[i];
  }
  out.rows.push_back({0, m, identity.entropy(), 0.0});

  std::vector<std::size_t> sizes;
  if (order == SweepOrder::kAscending) {
    for (std::size_t k = 1; k * ds <= m && ds < m; ++k) sizes.push_back(k * ds);
  } else {
    for (std::size_t k = 1; k * ds < m; ++k) sizes.push_back(m - k * ds);
  }
  if (sizes.empty()) {
    out.codebook = std::move(identity);
    out.fallback = true;
    return out;
  }

  std::vector<RefinedCodebook> candidates;
  std::vector<double> delta;
  double prev_h = out.rows[0].entropy;
  for (std::size_t k = 1; k <= sizes.size(); ++k) {
    RefinedCodebook cb = refine_step(units, freqs, sizes[k - 1], opts).codebook;
    const double h = cb.entropy();
    delta.push_back(h - prev_h);
    out.rows.push_back({k, sizes[k - 1], h, h - prev_h});
    prev_h = h;
    candidates.push_back(std::move(cb));
    if (k >= 2 && delta[k - 1] > delta[k - 2]) break;
  }
  out.chosen_k = sweep_stop_index(delta);
  out.codebook = candidates[out.chosen_k - 1];
  return out;
}

RefinedCodebook kmeans_codebook(const Tensor& units, std::span<const double> freqs, std::size_t s,
                                std::size_t iterations) {
  check_codebook(units, freqs);
  const std::size_t m = units.rows(), l = units.cols();
  auto seeds = seed_units(units, freqs, s);
  Tensor centers({s, l});
  for (std::size_t j = 0; j < s; ++j) {
    auto src = units.row_span(seeds[j]);
    std::copy(src.begin(), src.end(), centers.row_span(j).begin());
  }
  std::vector<std::size_t> assign(m, 0);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      double bd = kInf;
      for (std::size_t j = 0; j < s; ++j) {
        const double d = sq_dist(units.row_span(i), centers.row_span(j));
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    for (std::size_t j = 0; j < s; ++j) {
      double mass = 0.0;
      std::size_t count = 0;
      std::vector<double> acc(l, 0.0), plain(l, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        if (assign[i] != j) continue;
        mass += freqs[i];
        ++count;
        for (std::size_t k = 0; k < l; ++k) {
          acc[k] += freqs[i] * units(i, k);
          plain[k] += units(i, k);
        }
      }
      if (count == 0) continue;
      for (std::size_t k = 0; k < l; ++k) centers(j, k) = mass > 0.0 ? acc[k] / mass : plain[k] / double(count);
    }
  }
  return harden(units, freqs, merge_plan(freqs, assign, s), centers);
}

}  // namespace dsgg::otvocab
