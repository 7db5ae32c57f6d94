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

#include "dsgg/sggpred/sggpred.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dsgg/numerics/linalg.hpp"

namespace dsgg::sggpred {

using numerics::Linear;

std::vector<PairIndex> enumerate_pairs(const scene::AnnotatedVideo& video, const scene::Vocabulary& vocab) {
  std::vector<PairIndex> out;
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    const auto& f = video.frames[t];
    const std::size_t p = scene::person_index(f, vocab);
    if (f.detections.size() < 2) {
      throw std::invalid_argument("frame " + std::to_string(t) + " has no object besides the person");
    }
    for (std::size_t i = 0; i < f.detections.size(); ++i)
      if (i != p) out.push_back({t, p, i});
  }
  return out;
}

Var pair_features(Graph& g, std::span<const Var> augmented, std::span<const PairIndex> pairs) {
  (void)g;
  if (augmented.empty()) throw std::invalid_argument("pair_features: no frames");
  std::vector<std::size_t> offset(augmented.size() + 1, 0);
  for (std::size_t t = 0; t < augmented.size(); ++t) offset[t + 1] = offset[t] + augmented[t].rows();
  std::vector<std::size_t> subj, obj;
  for (const auto& p : pairs) {
    if (p.frame >= augmented.size() || p.subject >= augmented[p.frame].rows() ||
        p.object >= augmented[p.frame].rows())
      throw std::invalid_argument("pair_features: pair index out of range");
    subj.push_back(offset[p.frame] + p.subject);
    obj.push_back(offset[p.frame] + p.object);
  }
  Var table = augmented.size() == 1 ? augmented[0] : numerics::concat_rows(augmented);
  std::vector<Var> cols{numerics::embedding(table, subj), numerics::embedding(table, obj)};
  return numerics::concat_cols(cols);
}

SggPredictor::SggPredictor(const PredictorConfig& cfg, numerics::Rng& rng) : cfg_(cfg) {
  const std::size_t w = cfg.width;
  if (w == 0 || cfg.heads == 0 || w % cfg.heads != 0 || cfg.num_objects == 0 || cfg.num_predicates == 0)
    throw std::invalid_argument("sggpred: invalid predictor config");
  query_in = Linear("sgg.query", cfg.pair_dim, w, rng);
  frame_pos = numerics::Parameter("sgg.frame_pos", rng.normal_tensor({cfg.max_frames, w}, 0.1));
  ln_self = numerics::LayerNorm("sgg.ln_self", w);
  ln_cross = numerics::LayerNorm("sgg.ln_cross", w);
  ln_ffn = numerics::LayerNorm("sgg.ln_ffn", w);
  ln_out = numerics::LayerNorm("sgg.ln_out", w);
  sq = Linear("sgg.self.q", w, w, rng);
  sk = Linear("sgg.self.k", w, w, rng, false);
  sv = Linear("sgg.self.v", w, w, rng);
  so = Linear("sgg.self.o", w, w, rng);
  cq = Linear("sgg.cross.q", w, w, rng);
  ck = Linear("sgg.cross.k", cfg.memory_dim, w, rng, false);
  cv = Linear("sgg.cross.v", cfg.memory_dim, w, rng);
  co = Linear("sgg.cross.o", w, w, rng);
  fc1 = Linear("sgg.fc1", w, cfg.ffn, rng);
  fc2 = Linear("sgg.fc2", cfg.ffn, w, rng);
  class_head = Linear("sgg.class", w, cfg.num_objects, rng);
  predicate_head = Linear("sgg.predicate", w, cfg.num_predicates, rng);
}

PredictorOutput SggPredictor::forward(Graph& g, Var pairs, std::span<const PairIndex> index, Var memory) {
  const std::size_t n = pairs.rows();
  if (n == 0 || n != index.size()) throw std::invalid_argument("sggpred: pair rows != pair index");
  if (pairs.cols() != cfg_.pair_dim) throw std::invalid_argument("sggpred: pair feature width mismatch");
  if (memory.cols() != cfg_.memory_dim || memory.rows() == 0)
    throw std::invalid_argument("sggpred: memory shape " + numerics::shape_string(memory.value().shape()));
  std::vector<std::size_t> frames;
  Tensor mask({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i].frame >= cfg_.max_frames) throw std::invalid_argument("sggpred: frame index beyond max_frames");
    frames.push_back(index[i].frame);
    for (std::size_t j = 0; j < n; ++j)
      if (index[i].frame != index[j].frame) mask(i, j) = numerics::kMaskedScore;
  }
  Var x = add(query_in(g, pairs), numerics::embedding(g.param(frame_pos), frames));
  Var a = ln_self(g, x);
  x = add(x, so(g, numerics::multi_head_attention(sq(g, a), sk(g, a), sv(g, a), cfg_.heads, &mask)));
  Var c = ln_cross(g, x);
  x = add(x, co(g, numerics::multi_head_attention(cq(g, c), ck(g, memory), cv(g, memory), cfg_.heads, nullptr)));
  x = add(x, fc2(g, numerics::gelu(fc1(g, ln_ffn(g, x)))));
  Var h = ln_out(g, x);
  return {class_head(g, h), predicate_head(g, h)};
}

ParameterList SggPredictor::parameters() {
  ParameterList out{&frame_pos};
  for (auto* l : {&ln_self, &ln_cross, &ln_ffn, &ln_out}) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto* l : {&query_in, &sq, &sk, &sv, &so, &cq, &ck, &cv, &co, &fc1, &fc2, &class_head, &predicate_head}) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

PairTargets make_targets(const scene::AnnotatedVideo& video, std::span<const PairIndex> pairs,
                         std::size_t num_predicates) {
  PairTargets t;
  t.predicates = Tensor({pairs.size(), num_predicates});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& f = video.frames.at(pairs[i].frame);
    t.classes.push_back(f.detections.at(pairs[i].object).class_id);
    for (const auto& tr : f.gt_triplets) {
      if (tr.subject != pairs[i].subject || tr.object != pairs[i].object) continue;
      if (tr.predicate >= num_predicates) throw std::invalid_argument("make_targets: predicate id out of range");
      t.predicates(i, tr.predicate) = 1.0;
    }
  }
  return t;
}

Var sgg_loss(Var class_logits, Var predicate_logits, const PairTargets& targets, double alpha) {
  Var bce = numerics::binary_cross_entropy(predicate_logits, targets.predicates);
  if (alpha == 0.0) return bce;
  return add(scale(numerics::cross_entropy(class_logits, targets.classes), alpha), bce);
}

scene::SceneGraphPrediction decode(const Tensor& class_logits, const Tensor& predicate_logits,
                                   std::span<const PairIndex> pairs, const scene::AnnotatedVideo& video,
                                   scene::Task task, const scene::Vocabulary& vocab) {
  const std::size_t n = pairs.size();
  if (class_logits.rows() != n || predicate_logits.rows() != n || class_logits.cols() != vocab.num_objects() ||
      predicate_logits.cols() != vocab.num_predicates())
    throw std::invalid_argument("decode: logits do not match pairs and vocabulary");
  scene::SceneGraphPrediction out;
  out.frames.resize(video.frames.size());
  const Tensor class_probs = numerics::softmax_rows(class_logits);
  if (task == scene::Task::kSgCls) {
    for (std::size_t t = 0; t < video.frames.size(); ++t)
      out.frames[t].class_probs.assign(video.frames[t].detections.size(), std::vector<double>(vocab.num_objects()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const PairIndex& p = pairs[i];
    auto& frame = out.frames.at(p.frame);
    double object_prob = 1.0;
    if (task == scene::Task::kSgCls) {
      auto row = class_probs.row_span(i);
      frame.class_probs[p.object].assign(row.begin(), row.end());
      frame.class_probs[p.subject].assign(vocab.num_objects(), 0.0);
      frame.class_probs[p.subject][vocab.person_id()] = 1.0;
      object_prob = 0.0;
      for (double v : row) object_prob = std::max(object_prob, v);
    }
    for (std::size_t k = 0; k < vocab.num_predicates(); ++k) {
      const double z = predicate_logits(i, k);
      const double prob = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      frame.triplets.push_back({p.subject, k, p.object, object_prob * prob});
    }
  }
  for (auto& f : out.frames) scene::rank_triplets(f.triplets);
  return out;
}

}  // namespace dsgg::sggpred
