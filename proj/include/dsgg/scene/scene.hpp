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

#ifndef DSGG_SCENE_SCENE_HPP_
#define DSGG_SCENE_SCENE_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dsgg::scene {

enum class PredicateGroup { kAttention, kSpatial, kContact };

std::string_view group_name(PredicateGroup g);

struct PredicateClass {
  std::string name;
  PredicateGroup group;
};

// Object classes and predicate classes. Names are unique within each list and
// the object list must contain "person", the subject of every relation.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> objects, std::vector<PredicateClass> predicates);

  // 8 object classes, 6 predicates (2 per group).
  static Vocabulary desk_default();

  std::size_t num_objects() const { return objects_.size(); }
  std::size_t num_predicates() const { return predicates_.size(); }
  const std::string& object_name(std::size_t id) const { return objects_.at(id); }
  const PredicateClass& predicate(std::size_t id) const { return predicates_.at(id); }
  std::size_t object_id(std::string_view name) const;
  std::size_t predicate_id(std::string_view name) const;
  std::size_t person_id() const { return person_; }

 private:
  std::vector<std::string> objects_;
  std::vector<PredicateClass> predicates_;
  std::size_t person_ = 0;
};

// Box center and size, all normalized to [0, 1].
struct Box {
  double x = 0.5;
  double y = 0.5;
  double w = 0.1;
  double h = 0.1;

  bool operator==(const Box&) const = default;
};

struct Detection {
  std::size_t class_id = 0;
  Box box;
  std::vector<double> feature;
  // Latched contact state written by the synthetic generator; absent for data
  // from elsewhere.
  std::optional<bool> contact_state;

  bool operator==(const Detection&) const = default;
};

struct Triplet {
  std::size_t subject = 0;
  std::size_t predicate = 0;
  std::size_t object = 0;
  double confidence = 1.0;

  bool operator==(const Triplet&) const = default;
};

struct Frame {
  std::vector<Detection> detections;
  std::vector<Triplet> gt_triplets;

  bool operator==(const Frame&) const = default;
};

struct AnnotatedVideo {
  std::vector<Frame> frames;
  double width = 640.0;
  double height = 480.0;

  bool operator==(const AnnotatedVideo&) const = default;
};

// Index of the single person detection; throws if there is not exactly one.
std::size_t person_index(const Frame& frame, const Vocabulary& vocab);

// Checks every structural invariant (frame count, one person per frame, box
// range, finite features, triplet indices). Throws std::invalid_argument.
void validate(const AnnotatedVideo& video, const Vocabulary& vocab);

enum class Task { kPredCls, kSgCls };
enum class Constraint { kWith, kNo };

std::string_view task_name(Task t);
std::string_view constraint_name(Constraint c);
Task parse_task(std::string_view s);
Constraint parse_constraint(std::string_view s);

struct FramePrediction {
  // Ranked: confidence descending, then predicate id, then object index.
  std::vector<Triplet> triplets;
  // Per detection class distribution; empty when labels were given.
  std::vector<std::vector<double>> class_probs;
};

struct SceneGraphPrediction {
  std::vector<FramePrediction> frames;
};

bool triplet_rank_less(const Triplet& a, const Triplet& b);
void rank_triplets(std::vector<Triplet>& triplets);

// With: keep only the highest-ranked triplet of every ordered (subject,
// object) pair. No: unchanged.
SceneGraphPrediction apply_constraint(const SceneGraphPrediction& pred, Constraint mode);
FramePrediction apply_constraint(const FramePrediction& pred, Constraint mode);

// JSONL dataset format, one video per line:
//   {"frames":[{"detections":[{"class":c,"box":[x,y,w,h],"feature":[..]}],
//               "gt_triplets":[[s,p,o],...]}],"wh":[w,h]}
nlohmann::json video_to_json(const AnnotatedVideo& video);
AnnotatedVideo video_from_json(const nlohmann::json& j);
std::string to_jsonl(const std::vector<AnnotatedVideo>& videos);
std::vector<AnnotatedVideo> parse_jsonl(std::string_view text);
void write_jsonl(const std::filesystem::path& path, const std::vector<AnnotatedVideo>& videos);
std::vector<AnnotatedVideo> read_jsonl(const std::filesystem::path& path);

// Prediction dump: the dataset record with "pred_triplets":[[s,p,o,conf],...]
// and, for SGCLS, "class_probs" on each frame.
nlohmann::json prediction_to_json(const AnnotatedVideo& video, const SceneGraphPrediction& pred);

}  // namespace dsgg::scene

#endif  // DSGG_SCENE_SCENE_HPP_
