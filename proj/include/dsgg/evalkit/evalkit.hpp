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

#ifndef DSGG_EVALKIT_EVALKIT_HPP_
#define DSGG_EVALKIT_EVALKIT_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsgg/scene/scene.hpp"

namespace dsgg::evalkit {

struct FrameRecall {
  std::size_t matched = 0;
  std::size_t total = 0;  // GT triplets in the frame
};

// Matches of the frame's GT triplets among the first K ranked predictions.
// A prediction matches a GT triplet iff subject, predicate and object agree;
// for SGCLS the argmax of class_probs must also equal the GT class of both
// subject and object. Each GT triplet counts once.
FrameRecall frame_recall(const scene::FramePrediction& pred, const scene::Frame& gt, std::size_t k,
                         scene::Task task);

// Mean of per-frame recall over frames with at least one GT triplet; 0 when
// there is none. Throws on K = 0 or a frame count mismatch.
double recall_at_k(const scene::SceneGraphPrediction& pred, const scene::AnnotatedVideo& gt, std::size_t k,
                   scene::Task task = scene::Task::kPredCls);

struct MetricRow {
  scene::Task task = scene::Task::kPredCls;
  scene::Constraint constraint = scene::Constraint::kWith;
  std::size_t k = 0;
  double recall = 0.0;
  std::size_t n_frames = 0;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  // Throws when the combination was not evaluated.
  double at(scene::Task task, scene::Constraint constraint, std::size_t k) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

using Predictor = std::function<scene::SceneGraphPrediction(const scene::AnnotatedVideo&, scene::Task)>;

// Runs `predict` once per (video, task) and scores every K and constraint,
// averaging over all frames of the corpus that carry GT triplets.
MetricTable evaluate(const std::vector<scene::AnnotatedVideo>& dataset, const Predictor& predict,
                     const std::vector<scene::Task>& tasks, const std::vector<std::size_t>& ks,
                     const std::vector<scene::Constraint>& constraints);

// Multinomial logistic regression from raw pair inputs [f_person, f_object,
// box_person, box_object] to the predicate, trained full batch. Scored as
// PREDCLS predictions with the softmax as confidence.
struct ProbeConfig {
  std::size_t steps = 2000;
  double lr = 0.05;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  MetricTable metrics;  // on the test videos
};

ProbeResult logistic_probe(const std::vector<scene::AnnotatedVideo>& train,
                           const std::vector<scene::AnnotatedVideo>& test, const scene::Vocabulary& vocab,
                           const ProbeConfig& cfg = {}, std::uint64_t seed = 0);

}  // namespace dsgg::evalkit

#endif  // DSGG_EVALKIT_EVALKIT_HPP_
