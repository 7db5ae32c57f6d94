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

#include "dsgg/synthgen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsgg/numerics/rng.hpp"

namespace dsgg::synthgen {

using numerics::Rng;
using numerics::Tensor;
using scene::Box;

WorldRule::WorldRule(const scene::Vocabulary& vocab, double margin)
    : vocab_(&vocab), margin_(margin) {
  graspable_.assign(vocab.num_objects(), false);
  attention_.assign(vocab.num_objects(), false);
  for (const char* n : {"cup", "book", "phone", "bag"}) graspable_[vocab.object_id(n)] = true;
  for (const char* n : {"tv", "laptop", "phone", "book"}) attention_[vocab.object_id(n)] = true;
  looking_ = vocab.predicate_id("looking_at");
  not_looking_ = vocab.predicate_id("not_looking_at");
  above_ = vocab.predicate_id("above");
  beneath_ = vocab.predicate_id("beneath");
  holding_ = vocab.predicate_id("holding");
  touching_ = vocab.predicate_id("touching");
}

bool boxes_overlap(const Box& a, const Box& b) {
  return std::abs(a.x - b.x) < 0.5 * (a.w + b.w) && std::abs(a.y - b.y) < 0.5 * (a.h + b.h);
}

std::size_t WorldRule::predicate(const Box& person, const Box& object, std::size_t object_class,
                                 bool latched) const {
  if (latched && boxes_overlap(person, object)) return graspable_[object_class] ? holding_ : touching_;
  const double dy = object.y - person.y;
  if (dy > margin_) return above_;
  if (dy < -margin_) return beneath_;
  return attention_[object_class] ? looking_ : not_looking_;
}

std::vector<scene::Triplet> WorldRule::derive(const scene::Frame& frame) const {
  const std::size_t p = scene::person_index(frame, *vocab_);
  std::vector<scene::Triplet> out;
  for (std::size_t i = 0; i < frame.detections.size(); ++i) {
    if (i == p) continue;
    const auto& d = frame.detections[i];
    out.push_back({p, predicate(frame.detections[p].box, d.box, d.class_id, d.contact_state.value_or(false)), i,
                   1.0});
  }
  return out;
}

World make_world(const scene::Vocabulary& vocab, const SynthConfig& cfg) {
  Rng rng(cfg.world_seed);
  World w;
  w.class_embedding = rng.normal_tensor({vocab.num_objects(), cfg.d_feat}, 1.0);
  w.box_projection = rng.normal_tensor({4, cfg.d_feat}, 1.0);
  w.latch_direction = rng.normal_tensor({1, cfg.d_feat}, 1.0);
  return w;
}

namespace {

struct Track {
  std::size_t cls = 0;
  Box box;
  double vx = 0.0, vy = 0.0;
  bool latched = false;
  std::size_t held = 0;  // frames in the current latch state
  double ox = 0.0, oy = 0.0;  // offset from the person while latched
};

double clamp_center(double c, double size) { return std::clamp(c, 0.5 * size, 1.0 - 0.5 * size); }

void drift(Track& t, Rng& rng, double accel) {
  t.vx = 0.8 * t.vx + rng.normal(0.0, accel);
  t.vy = 0.8 * t.vy + rng.normal(0.0, accel);
  double x = t.box.x + t.vx, y = t.box.y + t.vy;
  const double lo_x = 0.5 * t.box.w, hi_x = 1.0 - 0.5 * t.box.w;
  const double lo_y = 0.5 * t.box.h, hi_y = 1.0 - 0.5 * t.box.h;
  if (x < lo_x || x > hi_x) t.vx = -t.vx;
  if (y < lo_y || y > hi_y) t.vy = -t.vy;
  t.box.x = std::clamp(x, lo_x, hi_x);
  t.box.y = std::clamp(y, lo_y, hi_y);
}

std::vector<double> make_feature(const World& w, const Track& t, double noise, Rng& rng) {
  const std::size_t d = w.class_embedding.cols();
  std::vector<double> f(d);
  const double b[4] = {t.box.x, t.box.y, t.box.w, t.box.h};
  for (std::size_t k = 0; k < d; ++k) {
    double v = w.class_embedding(t.cls, k);
    for (std::size_t r = 0; r < 4; ++r) v += b[r] * w.box_projection(r, k);
    if (t.latched) v += w.latch_direction(0, k);
    // Draw even when noise is zero so sigma does not change the trajectories.
    v += noise * rng.normal();
    f[k] = v;
  }
  return f;
}

scene::AnnotatedVideo generate_one(Rng& rng, const SynthConfig& cfg, const scene::Vocabulary& vocab,
                                   const World& world, const WorldRule& rule) {
  const std::size_t person_cls = vocab.person_id();
  std::vector<std::size_t> object_classes;
  for (std::size_t c = 0; c < vocab.num_objects(); ++c)
    if (c != person_cls) object_classes.push_back(c);

  std::vector<Track> tracks(cfg.objects_per_frame);
  Track& person = tracks[0];
  person.cls = person_cls;
  person.box = {rng.uniform(0.3, 0.7), rng.uniform(0.35, 0.65), rng.uniform(0.18, 0.26),
                rng.uniform(0.35, 0.45)};
  for (std::size_t i = 1; i < tracks.size(); ++i) {
    Track& t = tracks[i];
    t.cls = object_classes[rng.below(object_classes.size())];
    t.box.w = rng.uniform(0.05, 0.15);
    t.box.h = rng.uniform(0.05, 0.15);
    t.box.x = clamp_center(rng.uniform(0.0, 1.0), t.box.w);
    t.box.y = clamp_center(rng.uniform(0.0, 1.0), t.box.h);
    t.vx = rng.normal(0.0, 0.02);
    t.vy = rng.normal(0.0, 0.02);
  }

  const std::size_t T = cfg.frames_per_video;
  scene::AnnotatedVideo video;
  video.width = cfg.frame_w;
  video.height = cfg.frame_h;
  for (std::size_t tau = 0; tau < T; ++tau) {
    if (tau > 0) drift(person, rng, 0.005);
    for (std::size_t i = 1; i < tracks.size(); ++i) {
      Track& t = tracks[i];
      const double u = rng.uniform();
      // A latch lasts at least two frames and never begins on the last one,
      // so every contact run spans two or more consecutive frames.
      if (t.latched) {
        if (t.held >= 2 && u < cfg.latch_release_prob) {
          t.latched = false;
          t.held = 0;
          t.vx = rng.normal(0.0, 0.02);
          t.vy = rng.normal(0.0, 0.02);
        }
      } else if (tau + 1 < T && (t.held >= 2 || tau == 0) && u < cfg.latch_start_prob) {
        t.latched = true;
        t.held = 0;
        t.ox = rng.uniform(-0.3, 0.3) * person.box.w;
        t.oy = rng.uniform(-0.3, 0.3) * person.box.h;
      }
      if (t.latched) {
        t.box.x = clamp_center(person.box.x + t.ox, t.box.w);
        t.box.y = clamp_center(person.box.y + t.oy, t.box.h);
      } else if (tau > 0) {
        drift(t, rng, 0.01);
      }
      ++t.held;
    }
    scene::Frame frame;
    for (const Track& t : tracks) {
      scene::Detection d;
      d.class_id = t.cls;
      d.box = t.box;
      d.feature = make_feature(world, t, cfg.noise, rng);
      d.contact_state = t.latched;
      frame.detections.push_back(std::move(d));
    }
    frame.gt_triplets = rule.derive(frame);
    video.frames.push_back(std::move(frame));
  }
  return video;
}

}  // namespace

std::vector<scene::AnnotatedVideo> generate(std::uint64_t seed, const SynthConfig& cfg,
                                            const scene::Vocabulary& vocab) {
  if (cfg.frames_per_video < 2) throw std::invalid_argument("synthgen: frames_per_video must be >= 2");
  if (cfg.objects_per_frame < 2 || cfg.objects_per_frame > 8) {
    throw std::invalid_argument("synthgen: objects_per_frame must be in [2, 8]");
  }
  if (cfg.d_feat == 0) throw std::invalid_argument("synthgen: d_feat must be positive");
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("synthgen: noise must be >= 0");
  const World world = make_world(vocab, cfg);
  const WorldRule rule(vocab, cfg.margin);
  std::vector<scene::AnnotatedVideo> out;
  out.reserve(cfg.n_videos);
  for (std::size_t i = 0; i < cfg.n_videos; ++i) {
    Rng rng(numerics::derive_seed(seed, i + 1));
    out.push_back(generate_one(rng, cfg, vocab, world, rule));
  }
  return out;
}

}  // namespace dsgg::synthgen
