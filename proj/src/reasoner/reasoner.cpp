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

#include "dsgg/reasoner/reasoner.hpp"

#include <cmath>
#include <stdexcept>

#include "dsgg/numerics/linalg.hpp"
#include "dsgg/numerics/optim.hpp"

namespace dsgg::reasoner {

using numerics::Linear;
using numerics::Rng;
using nlohmann::json;

namespace {

std::string block_name(std::size_t i) { return "rs.b" + std::to_string(i); }

void check_config(const TransformerConfig& c) {
  if (c.layers == 0 || c.dim == 0 || c.heads == 0 || c.dim % c.heads != 0 || c.ffn == 0 || c.max_seq == 0)
    throw std::invalid_argument("reasoner: invalid transformer config");
}

json config_json(const TransformerConfig& c) {
  return {{"layers", c.layers}, {"dim", c.dim}, {"heads", c.heads}, {"ffn", c.ffn}, {"max_seq", c.max_seq}};
}

TransformerConfig config_from_json(const json& j) {
  return {j.at("layers").get<std::size_t>(), j.at("dim").get<std::size_t>(), j.at("heads").get<std::size_t>(),
          j.at("ffn").get<std::size_t>(), j.at("max_seq").get<std::size_t>()};
}

LoraAdapter make_adapter(const std::string& name, std::size_t d, const LoraConfig& cfg, Rng& rng) {
  if (cfg.rank == 0 || cfg.rank > d) throw std::invalid_argument("lora: rank must be in [1, d]");
  LoraAdapter a;
  a.a = Parameter(name + ".a", rng.normal_tensor({d, cfg.rank}, 1.0 / std::sqrt(double(d))));
  a.b = Parameter(name + ".b", Tensor({cfg.rank, d}));
  a.alpha = cfg.alpha;
  return a;
}

Var adapted(Graph& g, Linear& proj, Var x, LoraAdapter* adapter) {
  Var y = proj(g, x);
  if (!adapter) return y;
  return add(y, scale(matmul(matmul(x, g.param(adapter->a)), g.param(adapter->b)), adapter->scaling()));
}

}  // namespace

LoraSet::LoraSet(const TransformerConfig& cfg, const LoraConfig& lora, Rng& rng) {
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    query.push_back(make_adapter("lora.b" + std::to_string(i) + ".q", cfg.dim, lora, rng));
    value.push_back(make_adapter("lora.b" + std::to_string(i) + ".v", cfg.dim, lora, rng));
  }
}

ParameterList LoraSet::parameters() {
  ParameterList out;
  for (std::size_t i = 0; i < query.size(); ++i) {
    out.push_back(&query[i].a);
    out.push_back(&query[i].b);
    out.push_back(&value[i].a);
    out.push_back(&value[i].b);
  }
  return out;
}

ToyTransformer::ToyTransformer(const TransformerConfig& cfg, std::size_t vocab_size, Rng& rng) : cfg_(cfg) {
  check_config(cfg);
  if (vocab_size == 0) throw std::invalid_argument("reasoner: empty token vocabulary");
  const std::size_t d = cfg.dim;
  token_embedding = Parameter("rs.tok", rng.normal_tensor({vocab_size, d}, 1.0 / std::sqrt(double(d))));
  position = Parameter("rs.pos", rng.normal_tensor({cfg.max_seq, d}, 0.1));
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string n = block_name(i);
    Block b;
    b.ln1 = numerics::LayerNorm(n + ".ln1", d);
    b.ln2 = numerics::LayerNorm(n + ".ln2", d);
    b.q = Linear(n + ".q", d, d, rng);
    b.k = Linear(n + ".k", d, d, rng, false);  // a key bias only shifts each score row
    b.v = Linear(n + ".v", d, d, rng);
    b.o = Linear(n + ".o", d, d, rng);
    b.fc1 = Linear(n + ".fc1", d, cfg.ffn, rng);
    b.fc2 = Linear(n + ".fc2", cfg.ffn, d, rng);
    blocks.push_back(std::move(b));
  }
  final_norm = numerics::LayerNorm("rs.final", d);
  lm_head = Linear("rs.head", d, vocab_size, rng);
}

Var ToyTransformer::forward(Graph& g, Var x, LoraSet* adapters, std::vector<Tensor>* attention) {
  const std::size_t n = x.rows();
  if (n == 0 || n > cfg_.max_seq) {
    throw std::invalid_argument("reasoner: sequence length " + std::to_string(n) + " outside [1, " +
                                std::to_string(cfg_.max_seq) + "]");
  }
  if (x.cols() != cfg_.dim) throw std::invalid_argument("reasoner: input width != model dim");
  if (adapters && merged_) throw std::logic_error("reasoner: adapters are already merged into this model");
  if (adapters && (adapters->query.size() != blocks.size() || adapters->value.size() != blocks.size()))
    throw std::invalid_argument("reasoner: adapter count != layer count");
  const Tensor mask = numerics::causal_mask(n);
  Var h = add(x, numerics::slice_rows(g.param(position), 0, n));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Block& b = blocks[i];
    Var a = b.ln1(g, h);
    Var q = adapted(g, b.q, a, adapters ? &adapters->query[i] : nullptr);
    Var v = adapted(g, b.v, a, adapters ? &adapters->value[i] : nullptr);
    Var att = numerics::multi_head_attention(q, b.k(g, a), v, cfg_.heads, &mask, attention);
    h = add(h, b.o(g, att));
    h = add(h, b.fc2(g, numerics::gelu(b.fc1(g, b.ln2(g, h)))));
  }
  return final_norm(g, h);
}

Var ToyTransformer::embed_tokens(Graph& g, std::span<const std::size_t> ids) {
  return numerics::embedding(g.param(token_embedding), ids);
}

Var ToyTransformer::lm_logits(Graph& g, Var hidden) { return lm_head(g, hidden); }

ParameterList ToyTransformer::parameters() {
  ParameterList out{&token_embedding, &position};
  for (Block& b : blocks) {
    for (auto* l : {&b.ln1, &b.ln2}) {
      auto p = l->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    for (auto* l : {&b.q, &b.k, &b.v, &b.o, &b.fc1, &b.fc2}) {
      auto p = l->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
  }
  auto f = final_norm.parameters();
  out.insert(out.end(), f.begin(), f.end());
  auto h = lm_head.parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

void ToyTransformer::set_frozen(bool frozen) {
  frozen_ = frozen;
  numerics::set_frozen(parameters(), frozen);
}

void ToyTransformer::save(numerics::Checkpoint& ckpt) const {
  auto& self = const_cast<ToyTransformer&>(*this);
  ckpt.put_params("", self.parameters());
  ckpt.meta["rs.config"] = config_json(cfg_);
  ckpt.meta["rs.frozen"] = frozen_;
  ckpt.meta["rs.merged"] = merged_;
}

ToyTransformer ToyTransformer::load(const numerics::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("rs.config")) throw std::runtime_error("checkpoint has no reasoner base");
  Rng rng(0);
  ToyTransformer m(config_from_json(ckpt.meta["rs.config"]), ckpt.get("rs.tok").rows(), rng);
  ckpt.get_params("", m.parameters());
  m.merged_ = ckpt.meta.value("rs.merged", false);
  m.set_frozen(ckpt.meta.value("rs.frozen", false));
  return m;
}

ToyTransformer lora_merge(const ToyTransformer& model, const LoraSet& adapters) {
  if (model.merged_) throw std::logic_error("lora_merge: model already has merged adapters");
  if (adapters.query.size() != model.blocks.size() || adapters.value.size() != model.blocks.size())
    throw std::invalid_argument("lora_merge: adapter count != layer count");
  ToyTransformer out = model;
  const std::size_t d = model.config().dim;
  auto fold = [&](Parameter& w, const LoraAdapter& ad) {
    const Tensor& a = ad.a.value;
    const Tensor& b = ad.b.value;
    if (a.rows() != d || b.cols() != d || a.cols() != b.rows() || a.cols() == 0)
      throw std::invalid_argument("lora_merge: adapter shapes " + numerics::shape_string(a.shape()) + " and " +
                                  numerics::shape_string(b.shape()) + " do not match d=" + std::to_string(d));
    Tensor delta = numerics::matmul(a, b);
    const double s = ad.scaling();
    for (std::size_t k = 0; k < delta.size(); ++k) w.value[k] += s * delta[k];
  };
  for (std::size_t i = 0; i < out.blocks.size(); ++i) {
    fold(out.blocks[i].q.weight, adapters.query[i]);
    fold(out.blocks[i].v.weight, adapters.value[i]);
  }
  out.merged_ = true;
  out.set_frozen(model.frozen());
  return out;
}

std::vector<std::size_t> SceneLanguage::sentence(const scene::AnnotatedVideo& video, std::size_t max_len) const {
  std::vector<std::size_t> out{bos()};
  for (const auto& f : video.frames) {
    for (const auto& t : f.gt_triplets) {
      out.push_back(object_token(f.detections.at(t.object).class_id));
      out.push_back(predicate_token(t.predicate));
    }
    out.push_back(sep());
  }
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

namespace {

Var sentence_loss(Graph& g, ToyTransformer& model, const std::vector<std::size_t>& s) {
  std::span<const std::size_t> all(s);
  Var hidden = model.forward(g, model.embed_tokens(g, all.first(s.size() - 1)));
  return numerics::cross_entropy(model.lm_logits(g, hidden), all.subspan(1));
}

}  // namespace

double next_token_loss(ToyTransformer& model, const std::vector<std::vector<std::size_t>>& sentences) {
  if (sentences.empty()) throw std::invalid_argument("next_token_loss: no sentences");
  double total = 0.0;
  for (const auto& s : sentences) {
    Graph g;
    total += sentence_loss(g, model, s).value().item();
  }
  return total / double(sentences.size());
}

ToyTransformer pretrain_base(std::uint64_t seed, const PretrainConfig& cfg, PretrainStats* stats) {
  const auto vocab = scene::Vocabulary::desk_default();
  synthgen::SynthConfig sc;
  sc.n_videos = cfg.videos;
  const auto videos = synthgen::generate(numerics::derive_seed(seed, 101), sc, vocab);
  const SceneLanguage lang{vocab.num_objects(), vocab.num_predicates()};
  std::vector<std::vector<std::size_t>> sentences;
  for (const auto& v : videos) sentences.push_back(lang.sentence(v, cfg.model.max_seq + 1));

  Rng init(numerics::derive_seed(seed, 102));
  Rng order(numerics::derive_seed(seed, 103));
  ToyTransformer model(cfg.model, lang.size(), init);
  numerics::AdamW opt(model.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, 0.01});
  PretrainStats local;
  local.initial_loss = next_token_loss(model, sentences);
  double block = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    Graph g;
    Var loss = sentence_loss(g, model, sentences[order.below(sentences.size())]);
    g.backward(loss);
    opt.step();
    block += loss.value().item();
    if ((step + 1) % 50 == 0) {
      local.loss_log.push_back(block / 50.0);
      block = 0.0;
    }
  }
  local.final_loss = next_token_loss(model, sentences);
  model.set_frozen(true);
  if (stats) *stats = std::move(local);
  return model;
}

Reasoner::Reasoner(ToyTransformer b, const ReasonerConfig& cfg, Rng& rng) : base(std::move(b)) {
  if (base.lora_merged()) throw std::invalid_argument("reasoner: base already has merged adapters");
  if (cfg.prefix >= base.config().max_seq) throw std::invalid_argument("reasoner: prefix fills the context");
  const std::size_t d = base.config().dim;
  lora = LoraSet(base.config(), cfg.lora, rng);
  prefix = Parameter("lora.prefix", rng.normal_tensor({cfg.prefix, d}, 1.0 / std::sqrt(double(d))));
  input = Linear("sig.in", cfg.signal_dim, d, rng);
}

Var Reasoner::reason(Graph& g, Var signal, bool use_adapters, std::vector<Tensor>* attention) {
  const std::size_t T = signal.rows(), P = prefix.value.rows();
  if (T == 0 || T > max_signal()) {
    throw std::invalid_argument("reason: signal length " + std::to_string(T) + " + prefix " + std::to_string(P) +
                                " exceeds max sequence " + std::to_string(base.config().max_seq));
  }
  std::vector<Var> parts{g.param(prefix), input(g, signal)};
  Var hidden = base.forward(g, numerics::concat_rows(parts), use_adapters ? &lora : nullptr, attention);
  return numerics::slice_rows(hidden, P, T);
}

ParameterList Reasoner::adapter_parameters() {
  ParameterList out = lora.parameters();
  out.push_back(&prefix);
  return out;
}

void Reasoner::save_adapters(numerics::Checkpoint& ckpt) const {
  auto& self = const_cast<Reasoner&>(*this);
  ckpt.put_params("", self.adapter_parameters());
  ckpt.put_params("", self.interface_parameters());
  ckpt.meta["lora.alpha"] = lora.query.empty() ? 0.0 : lora.query[0].alpha;
}

void Reasoner::load_adapters(const numerics::Checkpoint& ckpt) {
  ckpt.get_params("", adapter_parameters());
  ckpt.get_params("", interface_parameters());
  const double alpha = ckpt.meta.value("lora.alpha", 8.0);
  for (auto& a : lora.query) a.alpha = alpha;
  for (auto& a : lora.value) a.alpha = alpha;
}

}  // namespace dsgg::reasoner
