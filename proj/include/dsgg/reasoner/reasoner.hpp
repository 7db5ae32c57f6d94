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

#ifndef DSGG_REASONER_REASONER_HPP_
#define DSGG_REASONER_REASONER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/checkpoint.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/numerics/rng.hpp"
#include "dsgg/synthgen/synthgen.hpp"

namespace dsgg::reasoner {

using numerics::Graph;
using numerics::Parameter;
using numerics::ParameterList;
using numerics::Tensor;
using numerics::Var;

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t max_seq = 64;

  // One block, d = 32.
  static TransformerConfig small() { return {1, 32, 4, 128, 64}; }
  bool operator==(const TransformerConfig&) const = default;
};

struct LoraConfig {
  std::size_t rank = 4;
  double alpha = 8.0;
};

// Low-rank residual on one d x d projection: x W + (alpha / r) (x A) B.
struct LoraAdapter {
  Parameter a;  // d x r
  Parameter b;  // r x d, zero at init
  double alpha = 8.0;

  std::size_t rank() const { return a.value.cols(); }
  double scaling() const { return alpha / double(rank()); }
};

// Adapters for the query and value projection of every block.
struct LoraSet {
  std::vector<LoraAdapter> query;
  std::vector<LoraAdapter> value;

  LoraSet() = default;
  LoraSet(const TransformerConfig& cfg, const LoraConfig& lora, numerics::Rng& rng);
  ParameterList parameters();
  bool empty() const { return query.empty(); }
};

struct Block {
  numerics::LayerNorm ln1, ln2;
  numerics::Linear q, k, v, o;
  numerics::Linear fc1, fc2;
};

// Pre-LN decoder-only transformer with learned positions. Inputs are n x d
// embeddings; a token table and LM head exist for base pretraining.
class ToyTransformer {
 public:
  ToyTransformer() = default;
  ToyTransformer(const TransformerConfig& cfg, std::size_t vocab_size, numerics::Rng& rng);

  // x: n x d, n <= max_seq. Returns the final-block hidden states after the
  // closing layer norm. `attention` receives every head's probabilities.
  Var forward(Graph& g, Var x, LoraSet* adapters = nullptr, std::vector<Tensor>* attention = nullptr);
  Var embed_tokens(Graph& g, std::span<const std::size_t> ids);
  Var lm_logits(Graph& g, Var hidden);

  ParameterList parameters();
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }
  bool lora_merged() const { return merged_; }
  const TransformerConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return token_embedding.value.rows(); }

  void save(numerics::Checkpoint& ckpt) const;
  static ToyTransformer load(const numerics::Checkpoint& ckpt);

  Parameter token_embedding;
  Parameter position;
  std::vector<Block> blocks;
  numerics::LayerNorm final_norm;
  numerics::Linear lm_head;

 private:
  friend ToyTransformer lora_merge(const ToyTransformer& model, const LoraSet& adapters);
  TransformerConfig cfg_;
  bool frozen_ = false;
  bool merged_ = false;
};

// Folds the adapters into dense query/value weights. Throws on shape or rank
// mismatch and when the model already carries merged adapters.
ToyTransformer lora_merge(const ToyTransformer& model, const LoraSet& adapters);

// Symbolic scene sentences for base pretraining: BOS, then per frame the
// (object class, predicate) word pair of every relation, then SEP.
struct SceneLanguage {
  std::size_t num_objects = 0;
  std::size_t num_predicates = 0;

  std::size_t bos() const { return 0; }
  std::size_t sep() const { return 1; }
  std::size_t object_token(std::size_t c) const { return 2 + c; }
  std::size_t predicate_token(std::size_t p) const { return 2 + num_objects + p; }
  std::size_t size() const { return 2 + num_objects + num_predicates; }

  std::vector<std::size_t> sentence(const scene::AnnotatedVideo& video, std::size_t max_len) const;
};

struct PretrainConfig {
  std::size_t steps = 400;
  std::size_t videos = 64;
  double lr = 1e-3;
  TransformerConfig model;
};

struct PretrainStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_log;  // mean over each block of 50 steps
};

// Next-token training over synthgen sentences; the returned base is frozen.
double next_token_loss(ToyTransformer& model, const std::vector<std::vector<std::size_t>>& sentences);
ToyTransformer pretrain_base(std::uint64_t seed, const PretrainConfig& cfg, PretrainStats* stats = nullptr);

struct ReasonerConfig {
  TransformerConfig model;
  LoraConfig lora;
  std::size_t prefix = 8;
  std::size_t signal_dim = 32;
};

// Frozen base + adapters + learned prompt prefix + input projection.
class Reasoner {
 public:
  Reasoner() = default;
  Reasoner(ToyTransformer base, const ReasonerConfig& cfg, numerics::Rng& rng);

  // signal: T x l. Returns T x d hidden states at the signal positions.
  Var reason(Graph& g, Var signal, bool use_adapters = true, std::vector<Tensor>* attention = nullptr);

  std::size_t dim() const { return base.config().dim; }
  std::size_t max_signal() const { return base.config().max_seq - prefix.value.rows(); }

  // Trainable in every stage-2 phase.
  ParameterList interface_parameters() { return input.parameters(); }
  // Adapters and prefix.
  ParameterList adapter_parameters();

  void save_adapters(numerics::Checkpoint& ckpt) const;
  void load_adapters(const numerics::Checkpoint& ckpt);

  ToyTransformer base;
  LoraSet lora;
  Parameter prefix;
  numerics::Linear input;
};

}  // namespace dsgg::reasoner

#endif  // DSGG_REASONER_REASONER_HPP_
