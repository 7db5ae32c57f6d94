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

#ifndef DSGG_SGGPRED_SGGPRED_HPP_
#define DSGG_SGGPRED_SGGPRED_HPP_

#include <span>
#include <vector>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/numerics/rng.hpp"
#include "dsgg/scene/scene.hpp"

namespace dsgg::sggpred {

using numerics::Graph;
using numerics::ParameterList;
using numerics::Tensor;
using numerics::Var;

// One decoder query: the person and one other detection of a frame.
struct PairIndex {
  std::size_t frame = 0;
  std::size_t subject = 0;
  std::size_t object = 0;

  bool operator==(const PairIndex&) const = default;
};

// Frame-major, objects in detection order. Throws when a frame has no
// person or no other detection.
std::vector<PairIndex> enumerate_pairs(const scene::AnnotatedVideo& video, const scene::Vocabulary& vocab);

// augmented[t]: the frame's F_d^+ (n_t x q). Returns N x 2q rows
// [F_d^+(subject), F_d^+(object)].
Var pair_features(Graph& g, std::span<const Var> augmented, std::span<const PairIndex> pairs);

struct PredictorConfig {
  std::size_t pair_dim = 80;
  std::size_t memory_dim = 64;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t max_frames = 64;
  std::size_t num_objects = 8;
  std::size_t num_predicates = 6;
};

struct PredictorOutput {
  Var class_logits;      // N x |Y_o|
  Var predicate_logits;  // N x |Y_p|
};

// One pre-LN decoder layer: self-attention among the pairs of a frame,
// cross-attention into F_implicit, feed-forward. A learned frame-index
// embedding tells each query which memory row is its own frame.
class SggPredictor {
 public:
  SggPredictor() = default;
  SggPredictor(const PredictorConfig& cfg, numerics::Rng& rng);

  PredictorOutput forward(Graph& g, Var pairs, std::span<const PairIndex> index, Var memory);
  ParameterList parameters();
  const PredictorConfig& config() const { return cfg_; }

  numerics::Linear query_in;
  numerics::Parameter frame_pos;
  numerics::LayerNorm ln_self, ln_cross, ln_ffn, ln_out;
  numerics::Linear sq, sk, sv, so;
  numerics::Linear cq, ck, cv, co;
  numerics::Linear fc1, fc2;
  numerics::Linear class_head, predicate_head;

 private:
  PredictorConfig cfg_;
};

struct PairTargets {
  std::vector<std::size_t> classes;  // object class per pair
  Tensor predicates;                 // N x |Y_p| multi-hot
};

PairTargets make_targets(const scene::AnnotatedVideo& video, std::span<const PairIndex> pairs,
                         std::size_t num_predicates);

// alpha * CE(object classes) + BCE(predicates), both batch means.
Var sgg_loss(Var class_logits, Var predicate_logits, const PairTargets& targets, double alpha);

// Candidate triplets of every pair, ranked per frame. PREDCLS: confidence is
// the predicate probability. SGCLS: object argmax class probability times
// predicate probability, plus per-detection class distributions (the person
// detection is one-hot on "person").
scene::SceneGraphPrediction decode(const Tensor& class_logits, const Tensor& predicate_logits,
                                   std::span<const PairIndex> pairs, const scene::AnnotatedVideo& video,
                                   scene::Task task, const scene::Vocabulary& vocab);

}  // namespace dsgg::sggpred

#endif  // DSGG_SGGPRED_SGGPRED_HPP_
