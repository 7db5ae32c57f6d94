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

#include "dsgg/vqvae/vqvae.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dsgg/numerics/optim.hpp"

namespace dsgg::vqvae {

using numerics::Rng;

Quantized quantize(std::span<const double> latent, const Tensor& units) {
  if (units.rows() == 0 || units.shape().size() != 2) throw std::invalid_argument("quantize: empty codebook");
  if (latent.size() != units.cols()) {
    throw std::invalid_argument("quantize: latent dim " + std::to_string(latent.size()) +
                                " != codebook dim " + std::to_string(units.cols()));
  }
  Quantized best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < units.rows(); ++k) {
    auto c = units.row_span(k);
    double d = 0.0;
    for (std::size_t j = 0; j < latent.size(); ++j) {
      const double diff = latent[j] - c[j];
      d += diff * diff;
    }
    if (d < best.distance) best = {k, d};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

std::vector<std::size_t> quantize_rows(const Tensor& latents, const Tensor& units) {
  std::vector<std::size_t> out(latents.rows());
  for (std::size_t i = 0; i < latents.rows(); ++i) out[i] = quantize(latents.row_span(i), units).index;
  return out;
}

std::vector<double> Codebook::frequencies() const {
  double total = 0.0;
  for (double u : usage) total += u;
  std::vector<double> p(size(), 1.0 / double(size()));
  if (total > 0.0)
    for (std::size_t i = 0; i < size(); ++i) p[i] = usage[i] / total;
  return p;
}

void Codebook::validate() const {
  if (units.shape().size() != 2 || units.rows() < 2) throw std::invalid_argument("codebook: need m >= 2 units");
  if (!units.all_finite()) throw std::invalid_argument("codebook: non-finite unit");
  if (usage.size() != units.rows()) throw std::invalid_argument("codebook: usage length != m");
  for (double u : usage)
    if (!(u >= 0.0)) throw std::invalid_argument("codebook: negative usage count");
}

VqvaeModel::VqvaeModel(const VqvaeConfig& cfg, Rng& rng)
    : encoder("vq.enc", cfg.d_feat, cfg.hidden, cfg.latent, rng),
      decoder("vq.dec", cfg.latent, cfg.hidden, cfg.d_feat, rng),
      codebook("vq.codebook", rng.normal_tensor({cfg.codebook_size, cfg.latent},
                                                1.0 / std::sqrt(double(cfg.latent)))),
      usage(cfg.codebook_size, 0.0),
      lambda(cfg.lambda) {
  if (cfg.codebook_size < 2) throw std::invalid_argument("vqvae: codebook size must be >= 2");
}

Tensor VqvaeModel::encode(const Tensor& x) {
  Graph g;
  return encoder(g, g.constant(x)).value();
}

Tensor VqvaeModel::decode(const Tensor& z) {
  Graph g;
  return decoder(g, g.constant(z)).value();
}

numerics::ParameterList VqvaeModel::parameters() {
  return numerics::concat_params({encoder.parameters(), decoder.parameters(), {&codebook}});
}

void VqvaeModel::save(numerics::Checkpoint& ckpt) const {
  auto& self = const_cast<VqvaeModel&>(*this);
  ckpt.put_params("", self.parameters());
  ckpt.put("vq.usage", Tensor({usage.size()}, usage));
  ckpt.meta["vq.lambda"] = lambda;
}

void VqvaeModel::load(const numerics::Checkpoint& ckpt) {
  const Tensor& enc_w = ckpt.get("vq.enc.fc1.weight");
  const Tensor& enc_o = ckpt.get("vq.enc.fc2.weight");
  const Tensor& cb = ckpt.get("vq.codebook");
  VqvaeConfig cfg;
  cfg.d_feat = enc_w.rows();
  cfg.hidden = enc_w.cols();
  cfg.latent = enc_o.cols();
  cfg.codebook_size = cb.rows();
  Rng rng(0);
  *this = VqvaeModel(cfg, rng);
  ckpt.get_params("", parameters());
  const Tensor& u = ckpt.get("vq.usage");
  usage.assign(u.values().begin(), u.values().end());
  if (ckpt.meta.contains("vq.lambda")) lambda = ckpt.meta["vq.lambda"].get<double>();
}

namespace {

Var squared_norm_mean(Var d) {
  return numerics::scale(numerics::sum(numerics::mul(d, d)), 1.0 / double(d.rows()));
}

}  // namespace

Anchor make_anchor(VqvaeModel& model, const Tensor& batch) {
  Anchor a;
  a.latent = model.encode(batch);
  a.indices = quantize_rows(a.latent, model.codebook.value);
  a.quantized = Tensor({a.indices.size(), a.latent.cols()});
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    auto src = model.codebook.value.row_span(a.indices[i]);
    std::copy(src.begin(), src.end(), a.quantized.row_span(i).begin());
  }
  return a;
}

LossParts vqvae_loss(Graph& g, VqvaeModel& model, const Tensor& batch, const Anchor* anchor) {
  if (batch.rows() == 0) throw std::invalid_argument("vqvae_loss: empty batch");
  using namespace numerics;
  Var x = g.constant(batch);
  Var z = model.encode(g, x);
  LossParts parts;
  parts.indices = anchor ? anchor->indices : quantize_rows(z.value(), model.codebook.value);
  Var c = embedding(g.param(model.codebook), parts.indices);
  Var sg_z = anchor ? g.constant(anchor->latent) : stop_gradient(z);
  Var sg_c = anchor ? g.constant(anchor->quantized) : stop_gradient(c);
  Var q;
  if (anchor) {
    Tensor offset = anchor->quantized;
    for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= anchor->latent[i];
    q = add(z, g.constant(std::move(offset)));
  } else {
    q = add(z, stop_gradient(sub(c, z)));
  }
  Var recon = squared_norm_mean(sub(x, model.decode(g, q)));
  Var embed = squared_norm_mean(sub(sg_z, c));
  Var commit = scale(squared_norm_mean(sub(z, sg_c)), model.lambda);
  parts.total = add(add(recon, embed), commit);
  parts.reconstruction = recon.value().item();
  parts.embedding = embed.value().item();
  parts.commitment = commit.value().item();
  if (!std::isfinite(parts.total.value().item())) throw std::runtime_error("vqvae_loss: non-finite loss");
  return parts;
}

double reconstruction_mse(VqvaeModel& model, const Tensor& data) {
  Tensor z = model.encode(data);
  auto idx = quantize_rows(z, model.codebook.value);
  Tensor q({idx.size(), z.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) q(i, j) = model.codebook.value(idx[i], j);
  Tensor rec = model.decode(q);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = data[i] - rec[i];
    total += d * d;
  }
  return total / double(data.rows());
}

double perplexity(const std::vector<double>& usage) {
  double total = 0.0;
  for (double u : usage) total += u;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double u : usage)
    if (u > 0.0) h -= (u / total) * std::log(u / total);
  return std::exp(h);
}

VqvaeModel train_vqvae(const Tensor& data, const VqvaeConfig& cfg, std::uint64_t seed, TrainStats* stats) {
  if (data.rows() == 0) throw std::invalid_argument("train_vqvae: empty dataset");
  if (data.cols() != cfg.d_feat) {
    throw std::invalid_argument("train_vqvae: feature dim " + std::to_string(data.cols()) + " != d_feat " +
                                std::to_string(cfg.d_feat));
  }
  Rng init_rng(numerics::derive_seed(seed, 1));
  Rng rng(numerics::derive_seed(seed, 2));
  VqvaeModel model(cfg, init_rng);
  numerics::AdamW opt(model.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  TrainStats local;
  TrainStats& st = stats ? *stats : local;
  st = TrainStats{};
  st.initial_mse = reconstruction_mse(model, data);

  const std::size_t n = data.rows(), d = data.cols(), m = cfg.codebook_size;
  const std::size_t batch = std::min(cfg.batch, n);
  std::vector<std::size_t> order = rng.permutation(n);
  std::size_t cursor = 0, epoch = 0;
  std::vector<double> epoch_usage(m, 0.0);
  Tensor xb({batch, d});

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t b = 0; b < batch; ++b) {
      auto src = data.row_span(order[cursor + b]);
      std::copy(src.begin(), src.end(), xb.row_span(b).begin());
    }
    cursor += batch;
    Graph g;
    LossParts parts = vqvae_loss(g, model, xb);
    for (std::size_t k : parts.indices) epoch_usage[k] += 1.0;
    const double loss = parts.total.value().item();
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_vqvae: loss diverged at iteration " + std::to_string(it));
    }
    if (it % 100 == 0) st.loss_log.push_back(loss);
    opt.zero_grad();
    g.backward(parts.total);
    opt.step();

    if (cursor + batch > n) {
      // Epoch boundary.
      if (!st.reinits.empty() && st.reinits.back().epoch + 1 == epoch) {
        auto& ev = st.reinits.back();
        for (std::size_t k : ev.units) ev.next_epoch_usage.push_back(epoch_usage[k]);
      }
      if (cfg.reinit_dead && it + 1 < cfg.iterations) {
        ReinitEvent ev;
        ev.epoch = epoch;
        for (std::size_t k = 0; k < m; ++k)
          if (epoch_usage[k] == 0.0) ev.units.push_back(k);
        if (!ev.units.empty()) {
          std::vector<std::size_t> pick = rng.permutation(n);
          Tensor src({ev.units.size(), d});
          for (std::size_t i = 0; i < ev.units.size(); ++i) {
            auto row = data.row_span(pick[i % n]);
            std::copy(row.begin(), row.end(), src.row_span(i).begin());
          }
          Tensor z = model.encode(src);
          for (std::size_t i = 0; i < ev.units.size(); ++i) {
            for (std::size_t j = 0; j < cfg.latent; ++j) model.codebook.value(ev.units[i], j) = z(i, j);
            opt.reset_row(&model.codebook, ev.units[i]);
          }
          st.reinits.push_back(std::move(ev));
        }
      }
      std::fill(epoch_usage.begin(), epoch_usage.end(), 0.0);
      order = rng.permutation(n);
      cursor = 0;
      ++epoch;
    }
  }

  std::fill(model.usage.begin(), model.usage.end(), 0.0);
  for (std::size_t k : quantize_rows(model.encode(data), model.codebook.value)) model.usage[k] += 1.0;
  st.final_mse = reconstruction_mse(model, data);
  st.perplexity = perplexity(model.usage);
  return model;
}

}  // namespace dsgg::vqvae
