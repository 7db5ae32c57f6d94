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
#include <vector>

#include <gtest/gtest.h>

#include "dsgg/numerics/gradcheck.hpp"
#include "dsgg/synthgen/synthgen.hpp"
#include "dsgg/vqvae/vqvae.hpp"

namespace dsgg::vqvae {
namespace {

using numerics::Rng;

TEST(Quantize, ExactUnitHasZeroDistance) {
  Rng rng(1);
  Tensor units = rng.normal_tensor({8, 5}, 1.0);
  auto row = units.row_span(3);
  Quantized q = quantize(row, units);
  EXPECT_EQ(q.index, 3u);
  EXPECT_EQ(q.distance, 0.0);
}

TEST(Quantize, TieGoesToLowestIndex) {
  Tensor units({6, 2});
  units(0, 0) = 10.0;
  units(1, 0) = 1.0;
  units(4, 0) = -1.0;
  units(2, 1) = 5.0;
  units(3, 1) = -5.0;
  units(5, 0) = 7.0;
  std::vector<double> z{0.0, 0.0};
  EXPECT_EQ(quantize(z, units).index, 1u);
}

TEST(Quantize, EmptyOrMismatchedCodebookThrows) {
  std::vector<double> z{0.0, 0.0};
  EXPECT_THROW(quantize(z, Tensor({0, 2})), std::invalid_argument);
  EXPECT_THROW(quantize(z, Tensor({3, 4})), std::invalid_argument);
}

// Integer-valued latents and units make exact distance ties common.
TEST(Quantize, MatchesBruteForceIncludingTies) {
  Rng rng(2024);
  std::size_t ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 16, l = 3;
    Tensor units({m, l});
    for (std::size_t i = 0; i < units.size(); ++i) units[i] = double(rng.below(5)) - 2.0;
    std::vector<double> z(l);
    for (double& v : z) v = trial % 2 ? double(rng.below(5)) - 2.0 : rng.normal();
    std::vector<double> dist(m);
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t j = 0; j < l; ++j) dist[k] += (z[j] - units(k, j)) * (z[j] - units(k, j));
    auto best = std::min_element(dist.begin(), dist.end());
    if (std::count(dist.begin(), dist.end(), *best) > 1) ++ties;
    EXPECT_EQ(quantize(z, units).index, std::size_t(best - dist.begin()));
  }
  EXPECT_GT(ties, 50u);
}

VqvaeConfig tiny_config() {
  VqvaeConfig c;
  c.d_feat = 4;
  c.hidden = 5;
  c.latent = 3;
  c.codebook_size = 6;
  return c;
}

TEST(VqvaeLoss, MemorizedPointHasZeroLoss) {
  Rng rng(3);
  VqvaeModel model(tiny_config(), rng);
  Tensor x = rng.normal_tensor({1, 4}, 1.0);
  Tensor z = model.encode(x);
  for (std::size_t j = 0; j < 3; ++j) model.codebook.value(2, j) = z(0, j);
  model.decoder.second.weight.value.fill(0.0);
  for (std::size_t j = 0; j < 4; ++j) model.decoder.second.bias.value(0, j) = x(0, j);
  Graph g;
  LossParts parts = vqvae_loss(g, model, x);
  EXPECT_EQ(parts.indices[0], 2u);
  EXPECT_EQ(parts.total.value().item(), 0.0);
}

TEST(VqvaeLoss, ZeroLambdaDropsCommitment) {
  Rng rng(4);
  VqvaeModel model(tiny_config(), rng);
  model.lambda = 0.0;
  Tensor x = rng.normal_tensor({5, 4}, 1.0);
  Graph g;
  LossParts parts = vqvae_loss(g, model, x);
  EXPECT_EQ(parts.commitment, 0.0);
  EXPECT_DOUBLE_EQ(parts.total.value().item(), parts.reconstruction + parts.embedding);
  // Encoder gradient equals that of the reconstruction term alone, since the
  // embedding term sees the encoder only through sg[z].
  numerics::zero_grads(model.parameters());
  g.backward(parts.total);
  std::vector<Tensor> full;
  for (auto* p : model.encoder_parameters()) full.push_back(p->grad);
  numerics::zero_grads(model.parameters());
  Graph g2;
  Var z = model.encode(g2, g2.constant(x));
  Var c = numerics::embedding(g2.param(model.codebook), parts.indices);
  Var q = z + numerics::stop_gradient(c - z);
  Var d = g2.constant(x) - model.decode(g2, q);
  g2.backward(numerics::scale(numerics::sum(d * d), 1.0 / 5.0));
  auto enc = model.encoder_parameters();
  for (std::size_t i = 0; i < enc.size(); ++i) EXPECT_EQ(enc[i]->grad, full[i]);
}

TEST(VqvaeLoss, StraightThroughCopiesGradient) {
  Rng rng(5);
  VqvaeModel model(tiny_config(), rng);
  Tensor x = rng.normal_tensor({4, 4}, 1.0);
  Graph g;
  Var z = model.encode(g, g.constant(x));
  auto idx = quantize_rows(z.value(), model.codebook.value);
  Var c = numerics::embedding(g.param(model.codebook), idx);
  Var q = z + numerics::stop_gradient(c - z);
  Var d = g.constant(x) - model.decode(g, q);
  g.backward(numerics::sum(d * d));
  EXPECT_EQ(g.grad(z), g.grad(q));
  // Quantized value is an exact codebook row.
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(q.value()(i, j), model.codebook.value(idx[i], j));
}

TEST(VqvaeLoss, EmbeddingGradientTouchesOnlySelectedRows) {
  Rng rng(6);
  VqvaeConfig cfg = tiny_config();
  cfg.codebook_size = 12;
  VqvaeModel model(cfg, rng);
  Tensor x = rng.normal_tensor({3, 4}, 1.0);
  Graph g;
  LossParts parts = vqvae_loss(g, model, x);
  numerics::zero_grads(model.parameters());
  g.backward(parts.total);
  for (std::size_t k = 0; k < cfg.codebook_size; ++k) {
    bool selected = std::find(parts.indices.begin(), parts.indices.end(), k) != parts.indices.end();
    double norm = 0.0;
    for (double v : model.codebook.grad.row_span(k)) norm += std::abs(v);
    if (selected) EXPECT_GT(norm, 0.0);
    else EXPECT_EQ(norm, 0.0);
  }
}

TEST(VqvaeLoss, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    VqvaeModel model(tiny_config(), rng);
    model.lambda = 0.25;
    Tensor x = rng.normal_tensor({3, 4}, 1.0);
    const Anchor anchor = make_anchor(model, x);
    auto report = numerics::check_gradients(
        [&](Graph& g) { return vqvae_loss(g, model, x, &anchor).total; }, model.parameters());
    // At the anchor point the surrogate and the real loss agree in value and
    // in straight-through gradient.
    Graph g1, g2;
    LossParts real = vqvae_loss(g1, model, x);
    LossParts surrogate = vqvae_loss(g2, model, x, &anchor);
    EXPECT_DOUBLE_EQ(real.total.value().item(), surrogate.total.value().item());
    numerics::zero_grads(model.parameters());
    g1.backward(real.total);
    std::vector<Tensor> st;
    for (auto* p : model.parameters()) st.push_back(p->grad);
    numerics::zero_grads(model.parameters());
    g2.backward(surrogate.total);
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < st[i].size(); ++k) EXPECT_NEAR(params[i]->grad[k], st[i][k], 1e-12);
    EXPECT_TRUE(report.passed) << report.worst_param << " " << report.worst_rel_error;
    EXPECT_GT(report.coords_checked, 50u);
  }
}

TEST(Vqvae, CheckpointRoundTrip) {
  Rng rng(8);
  VqvaeModel model(tiny_config(), rng);
  model.usage = {1, 2, 3, 0, 5, 6};
  numerics::Checkpoint ck;
  model.save(ck);
  VqvaeModel back;
  back.load(numerics::deserialize_checkpoint(numerics::serialize_checkpoint(ck)));
  EXPECT_EQ(back.codebook.value, model.codebook.value);
  EXPECT_EQ(back.decoder.second.weight.value, model.decoder.second.weight.value);
  EXPECT_EQ(back.usage, model.usage);
}

TEST(Vqvae, PerplexityOfUniformUsage) {
  EXPECT_NEAR(perplexity({2, 2, 2, 2}), 4.0, 1e-12);
  EXPECT_NEAR(perplexity({0, 9, 0}), 1.0, 1e-12);
}

Tensor synthetic_features(std::size_t n) {
  scene::Vocabulary vocab = scene::Vocabulary::desk_default();
  synthgen::SynthConfig cfg;
  cfg.n_videos = 16;
  auto videos = synthgen::generate(77, cfg, vocab);
  Tensor out({n, cfg.d_feat});
  std::size_t r = 0;
  for (const auto& v : videos)
    for (const auto& f : v.frames)
      for (const auto& d : f.detections) {
        if (r == n) return out;
        std::copy(d.feature.begin(), d.feature.end(), out.row_span(r++).begin());
      }
  return out;
}

TEST(VqvaeTraining, ReducesReconstructionErrorByNinetyPercent) {
  Tensor data = synthetic_features(256);
  VqvaeConfig cfg;
  TrainStats stats;
  VqvaeModel model = train_vqvae(data, cfg, 42, &stats);
  EXPECT_LE(stats.final_mse, 0.1 * stats.initial_mse)
      << "initial " << stats.initial_mse << " final " << stats.final_mse;
  EXPECT_GT(stats.perplexity, 1.0);
  double total = 0.0;
  for (double u : model.usage) total += u;
  EXPECT_EQ(total, 256.0);
  // Reinitialized units are used again in the next epoch.
  std::size_t revived = 0, checked = 0;
  for (const auto& ev : stats.reinits) {
    for (double u : ev.next_epoch_usage) {
      ++checked;
      if (u > 0.0) ++revived;
    }
  }
  ASSERT_GT(checked, 0u);
  EXPECT_EQ(revived, checked);
}

}  // namespace
}  // namespace dsgg::vqvae
