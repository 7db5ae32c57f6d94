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

#include "dsgg/scene/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dsgg::scene {

using nlohmann::json;

std::string_view group_name(PredicateGroup g) {
  switch (g) {
    case PredicateGroup::kAttention: return "attention";
    case PredicateGroup::kSpatial: return "spatial";
    case PredicateGroup::kContact: return "contact";
  }
  return "?";
}

Vocabulary::Vocabulary(std::vector<std::string> objects, std::vector<PredicateClass> predicates)
    : objects_(std::move(objects)), predicates_(std::move(predicates)) {
  std::set<std::string> seen(objects_.begin(), objects_.end());
  if (seen.size() != objects_.size()) throw std::invalid_argument("vocabulary: duplicate object name");
  std::set<std::string> pseen;
  for (const auto& p : predicates_) pseen.insert(p.name);
  if (pseen.size() != predicates_.size()) {
    throw std::invalid_argument("vocabulary: duplicate predicate name");
  }
  if (objects_.empty() || predicates_.empty()) throw std::invalid_argument("vocabulary: empty");
  person_ = object_id("person");
}

Vocabulary Vocabulary::desk_default() {
  return Vocabulary({"person", "cup", "book", "phone", "laptop", "chair", "bag", "tv"},
                    {{"looking_at", PredicateGroup::kAttention},
                     {"not_looking_at", PredicateGroup::kAttention},
                     {"above", PredicateGroup::kSpatial},
                     {"beneath", PredicateGroup::kSpatial},
                     {"holding", PredicateGroup::kContact},
                     {"touching", PredicateGroup::kContact}});
}

std::size_t Vocabulary::object_id(std::string_view name) const {
  auto it = std::find(objects_.begin(), objects_.end(), name);
  if (it == objects_.end()) throw std::invalid_argument("vocabulary: unknown object '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - objects_.begin());
}

std::size_t Vocabulary::predicate_id(std::string_view name) const {
  for (std::size_t i = 0; i < predicates_.size(); ++i)
    if (predicates_[i].name == name) return i;
  throw std::invalid_argument("vocabulary: unknown predicate '" + std::string(name) + "'");
}

std::size_t person_index(const Frame& frame, const Vocabulary& vocab) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < frame.detections.size(); ++i) {
    if (frame.detections[i].class_id == vocab.person_id()) {
      if (found) throw std::invalid_argument("frame has more than one person detection");
      found = i;
    }
  }
  if (!found) throw std::invalid_argument("frame has no person detection");
  return *found;
}

void validate(const AnnotatedVideo& video, const Vocabulary& vocab) {
  if (video.frames.empty()) throw std::invalid_argument("video has no frames");
  if (!(video.width > 0 && video.height > 0)) throw std::invalid_argument("video frame size must be positive");
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    const Frame& f = video.frames[t];
    const std::string where = "frame " + std::to_string(t) + ": ";
    person_index(f, vocab);
    for (const auto& d : f.detections) {
      if (d.class_id >= vocab.num_objects()) throw std::invalid_argument(where + "class id out of range");
      for (double v : {d.box.x, d.box.y, d.box.w, d.box.h}) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(where + "box coordinate outside [0,1]");
      }
      for (double v : d.feature) {
        if (!std::isfinite(v)) throw std::invalid_argument(where + "non-finite feature");
      }
    }
    for (const auto& tr : f.gt_triplets) {
      if (tr.subject == tr.object) throw std::invalid_argument(where + "triplet subject == object");
      if (tr.subject >= f.detections.size() || tr.object >= f.detections.size() ||
          tr.predicate >= vocab.num_predicates()) {
        throw std::invalid_argument(where + "triplet index out of range");
      }
    }
  }
}

std::string_view task_name(Task t) { return t == Task::kPredCls ? "predcls" : "sgcls"; }
std::string_view constraint_name(Constraint c) { return c == Constraint::kWith ? "with" : "no"; }

Task parse_task(std::string_view s) {
  if (s == "predcls") return Task::kPredCls;
  if (s == "sgcls") return Task::kSgCls;
  throw std::invalid_argument("unknown task '" + std::string(s) + "' (expected predcls|sgcls)");
}

Constraint parse_constraint(std::string_view s) {
  if (s == "with") return Constraint::kWith;
  if (s == "no") return Constraint::kNo;
  throw std::invalid_argument("unknown constraint '" + std::string(s) + "' (expected with|no)");
}

bool triplet_rank_less(const Triplet& a, const Triplet& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.predicate != b.predicate) return a.predicate < b.predicate;
  if (a.object != b.object) return a.object < b.object;
  return a.subject < b.subject;
}

void rank_triplets(std::vector<Triplet>& triplets) {
  std::stable_sort(triplets.begin(), triplets.end(), triplet_rank_less);
}

FramePrediction apply_constraint(const FramePrediction& pred, Constraint mode) {
  if (mode == Constraint::kNo) return pred;
  FramePrediction out;
  out.class_probs = pred.class_probs;
  std::vector<Triplet> ranked = pred.triplets;
  rank_triplets(ranked);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& t : ranked) {
    if (seen.insert({t.subject, t.object}).second) out.triplets.push_back(t);
  }
  return out;
}

SceneGraphPrediction apply_constraint(const SceneGraphPrediction& pred, Constraint mode) {
  SceneGraphPrediction out;
  out.frames.reserve(pred.frames.size());
  for (const auto& f : pred.frames) out.frames.push_back(apply_constraint(f, mode));
  return out;
}

json video_to_json(const AnnotatedVideo& video) {
  json frames = json::array();
  for (const auto& f : video.frames) {
    json dets = json::array();
    for (const auto& d : f.detections) {
      json jd = {{"class", d.class_id}, {"box", {d.box.x, d.box.y, d.box.w, d.box.h}}};
      if (!d.feature.empty()) jd["feature"] = d.feature;
      if (d.contact_state) jd["state"] = *d.contact_state ? 1 : 0;
      dets.push_back(std::move(jd));
    }
    json gts = json::array();
    for (const auto& t : f.gt_triplets) gts.push_back({t.subject, t.predicate, t.object});
    frames.push_back({{"detections", std::move(dets)}, {"gt_triplets", std::move(gts)}});
  }
  return {{"frames", std::move(frames)}, {"wh", {video.width, video.height}}};
}

AnnotatedVideo video_from_json(const json& j) {
  AnnotatedVideo v;
  const auto& wh = j.at("wh");
  if (wh.size() != 2) throw std::invalid_argument("dataset: 'wh' must have 2 entries");
  v.width = wh[0].get<double>();
  v.height = wh[1].get<double>();
  for (const auto& jf : j.at("frames")) {
    Frame f;
    for (const auto& jd : jf.at("detections")) {
      Detection d;
      d.class_id = jd.at("class").get<std::size_t>();
      const auto& b = jd.at("box");
      if (b.size() != 4) throw std::invalid_argument("dataset: 'box' must have 4 entries");
      d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      if (jd.contains("feature")) d.feature = jd["feature"].get<std::vector<double>>();
      if (jd.contains("state")) d.contact_state = jd["state"].get<int>() != 0;
      f.detections.push_back(std::move(d));
    }
    if (jf.contains("gt_triplets")) {
      for (const auto& jt : jf["gt_triplets"]) {
        if (jt.size() != 3) throw std::invalid_argument("dataset: triplet must be [s,p,o]");
        f.gt_triplets.push_back(
            {jt[0].get<std::size_t>(), jt[1].get<std::size_t>(), jt[2].get<std::size_t>(), 1.0});
      }
    }
    v.frames.push_back(std::move(f));
  }
  return v;
}

std::string to_jsonl(const std::vector<AnnotatedVideo>& videos) {
  std::string out;
  for (const auto& v : videos) {
    out += video_to_json(v).dump();
    out += '\n';
  }
  return out;
}

std::vector<AnnotatedVideo> parse_jsonl(std::string_view text) {
  std::vector<AnnotatedVideo> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(video_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<AnnotatedVideo>& videos) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_jsonl(videos);
}

std::vector<AnnotatedVideo> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

json prediction_to_json(const AnnotatedVideo& video, const SceneGraphPrediction& pred) {
  json j = video_to_json(video);
  for (std::size_t t = 0; t < pred.frames.size() && t < j["frames"].size(); ++t) {
    json triplets = json::array();
    for (const auto& tr : pred.frames[t].triplets)
      triplets.push_back({tr.subject, tr.predicate, tr.object, tr.confidence});
    j["frames"][t]["pred_triplets"] = std::move(triplets);
    if (!pred.frames[t].class_probs.empty()) j["frames"][t]["class_probs"] = pred.frames[t].class_probs;
  }
  return j;
}

}  // namespace dsgg::scene
