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

#ifndef DSGG_VQVAE_VQVAE_HPP_
#define DSGG_VQVAE_VQVAE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/checkpoint.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/numerics/rng.hpp"

namespace dsgg::vqvae {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;

struct Quantized {
  std::size_t index = 0;
  double distance = 0.0;  // Euclidean
};

// argmin_k ||latent - c_k||, ties to the lowest index. units: m x l.
Quantized quantize(std::span<const double> latent, const Tensor& units);
// Row-wise quantize of an n x l matrix.
std::vector<std::size_t> quantize_rows(const Tensor& latents, const Tensor& units);

// Units plus corpus usage counts.
struct Codebook {
  Tensor units;                // m x l
  std::vector<double> usage;   // m counts

  std::size_t size() const { return units.rows(); }
  std::size_t dim() const { return units.cols(); }
  // Normalized usage; uniform when every count is zero.
  std::vector<double> frequencies() const;
  void validate() const;
};

struct VqvaeConfig {
  std::size_t d_feat = 32;
  std::size_t hidden = 64;
  std::size_t latent = 32;
  std::size_t codebook_size = 64;
  double lambda = 0.02;
  double lr = 3e-4;
  double weight_decay = 0.01;
  std::size_t iterations = 20000;
  std::size_t batch = 32;
  bool reinit_dead = true;
};

class VqvaeModel {
 public:
  VqvaeModel() = default;
  VqvaeModel(const VqvaeConfig& cfg, numerics::Rng& rng);

  Var encode(Graph& g, Var x) { return encoder(g, x); }
  Var decode(Graph& g, Var z) { return decoder(g, z); }
  // Inference helpers, no gradient.
  Tensor encode(const Tensor& x);
  Tensor decode(const Tensor& z);

  numerics::ParameterList parameters();
  numerics::ParameterList encoder_parameters() { return encoder.parameters(); }

  void save(numerics::Checkpoint& ckpt) const;
  void load(const numerics::Checkpoint& ckpt);

  numerics::Mlp encoder;
  numerics::Mlp decoder;
  numerics::Parameter codebook;
  std::vector<double> usage;
  double lambda = 0.02;
};

struct LossParts {
  Var total;
  double reconstruction = 0.0;
  double embedding = 0.0;
  double commitment = 0.0;  // already multiplied by lambda
  std::vector<std::size_t> indices;
};

// Stop-gradient values frozen at one parameter point.
struct Anchor {
  std::vector<std::size_t> indices;
  Tensor latent;     // z
  Tensor quantized;  // c
};

Anchor make_anchor(VqvaeModel& model, const Tensor& batch);

// Mean over the batch of
//   ||x - D(z + sg(c - z))||^2 + ||sg(z) - c||^2 + lambda ||z - sg(c)||^2
// with z = E(x) and c its nearest unit.
//
// With an anchor, every sg[.] term and the unit selection are taken from the
// anchor instead of the current forward pass. The result is a smooth
// surrogate whose exact gradient at the anchor point is the straight-through
// gradient, which is what finite differences can be checked against (the
// real loss is piecewise constant in z through the argmin).
LossParts vqvae_loss(Graph& g, VqvaeModel& model, const Tensor& batch, const Anchor* anchor = nullptr);

struct ReinitEvent {
  std::size_t epoch = 0;
  std::vector<std::size_t> units;
  // Usage of the same units over the following epoch (filled when it ends).
  std::vector<double> next_epoch_usage;
};

struct TrainStats {
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::vector<double> loss_log;  // every 100 iterations
  std::vector<ReinitEvent> reinits;
  double perplexity = 0.0;
};

// Mean per-sample squared reconstruction error through the quantizer.
double reconstruction_mse(VqvaeModel& model, const Tensor& data);
double perplexity(const std::vector<double>& usage);

// Adam-W training with per-epoch shuffles and dead-unit reinitialization at
// epoch ends. Usage counts are then recomputed by one pass over the data
// with the final weights. Throws std::runtime_error on a non-finite loss.
VqvaeModel train_vqvae(const Tensor& data, const VqvaeConfig& cfg, std::uint64_t seed,
                       TrainStats* stats = nullptr);

}  // namespace dsgg::vqvae

#endif  // DSGG_VQVAE_VQVAE_HPP_
