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

#ifndef DSGG_SYNTHGEN_SYNTHGEN_HPP_
#define DSGG_SYNTHGEN_SYNTHGEN_HPP_

#include <cstdint>
#include <vector>

#include "dsgg/numerics/tensor.hpp"
#include "dsgg/scene/scene.hpp"

namespace dsgg::synthgen {

struct SynthConfig {
  std::size_t n_videos = 200;
  std::size_t frames_per_video = 8;
  std::size_t objects_per_frame = 4;  // including the person
  std::size_t d_feat = 32;
  double noise = 0.05;
  double margin = 0.1;
  double frame_w = 640.0;
  double frame_h = 480.0;
  // Class embeddings and box/latch projections come from this seed, not from
  // the data seed, so train and test splits share one world.
  std::uint64_t world_seed = 20240601;
  double latch_start_prob = 0.2;
  double latch_release_prob = 0.3;
};

// Decision list over one (person, object) pair, evaluated top to bottom:
//   latched and boxes overlap  -> holding (graspable class) / touching
//   y_o - y_p >  margin        -> above    (the person is above the object)
//   y_o - y_p < -margin        -> beneath
//   otherwise                  -> looking_at (screen or reading class) / not_looking_at
// Exactly one predicate per pair.
class WorldRule {
 public:
  WorldRule(const scene::Vocabulary& vocab, double margin);

  std::size_t predicate(const scene::Box& person, const scene::Box& object,
                        std::size_t object_class, bool latched) const;
  // Ground-truth triplets of a frame recomputed from boxes and latch states.
  std::vector<scene::Triplet> derive(const scene::Frame& frame) const;

  double margin() const { return margin_; }

 private:
  const scene::Vocabulary* vocab_;
  double margin_;
  std::vector<bool> graspable_;
  std::vector<bool> attention_;
  std::size_t looking_, not_looking_, above_, beneath_, holding_, touching_;
};

bool boxes_overlap(const scene::Box& a, const scene::Box& b);

// Fixed random tensors defining the feature model.
struct World {
  numerics::Tensor class_embedding;  // num_objects x d_feat
  numerics::Tensor box_projection;   // 4 x d_feat
  numerics::Tensor latch_direction;  // 1 x d_feat
};

World make_world(const scene::Vocabulary& vocab, const SynthConfig& cfg);

// Video i uses the stream derive_seed(seed, i + 1). Throws on
// frames_per_video < 2 or objects_per_frame outside [2, 8].
std::vector<scene::AnnotatedVideo> generate(std::uint64_t seed, const SynthConfig& cfg,
                                            const scene::Vocabulary& vocab);

}  // namespace dsgg::synthgen

#endif  // DSGG_SYNTHGEN_SYNTHGEN_HPP_
