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

#include "dsgg/evalkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/layers.hpp"
#include "dsgg/numerics/linalg.hpp"
#include "dsgg/numerics/optim.hpp"

namespace dsgg::evalkit {

using scene::Constraint;
using scene::Task;

namespace {

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool labels_match(const scene::FramePrediction& pred, const scene::Frame& gt, std::size_t det) {
  if (det >= pred.class_probs.size() || pred.class_probs[det].empty()) return false;
  return argmax(pred.class_probs[det]) == gt.detections.at(det).class_id;
}

}  // namespace

FrameRecall frame_recall(const scene::FramePrediction& pred, const scene::Frame& gt, std::size_t k, Task task) {
  if (k == 0) throw std::invalid_argument("recall_at_k: K must be >= 1");
  std::vector<scene::Triplet> ranked = pred.triplets;
  scene::rank_triplets(ranked);
  if (ranked.size() > k) ranked.resize(k);
  FrameRecall r;
  r.total = gt.gt_triplets.size();
  for (const auto& g : gt.gt_triplets) {
    if (task == Task::kSgCls && !(labels_match(pred, gt, g.subject) && labels_match(pred, gt, g.object))) continue;
    for (const auto& p : ranked) {
      if (p.subject == g.subject && p.predicate == g.predicate && p.object == g.object) {
        ++r.matched;
        break;
      }
    }
  }
  return r;
}

double recall_at_k(const scene::SceneGraphPrediction& pred, const scene::AnnotatedVideo& gt, std::size_t k,
                   Task task) {
  if (k == 0) throw std::invalid_argument("recall_at_k: K must be >= 1");
  if (pred.frames.size() != gt.frames.size()) throw std::invalid_argument("recall_at_k: frame count mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    FrameRecall r = frame_recall(pred.frames[t], gt.frames[t], k, task);
    if (r.total == 0) continue;
    sum += double(r.matched) / double(r.total);
    ++n;
  }
  return n ? sum / double(n) : 0.0;
}

double MetricTable::at(Task task, Constraint constraint, std::size_t k) const {
  for (const auto& r : rows)
    if (r.task == task && r.constraint == constraint && r.k == k) return r.recall;
  throw std::out_of_range("metric table has no row for " + std::string(scene::task_name(task)) + "/" +
                          std::string(scene::constraint_name(constraint)) + "/R@" + std::to_string(k));
}

std::string MetricTable::to_csv() const {
  std::ostringstream out;
  out << "task,constraint,K,recall,n_frames\n";
  out.precision(17);
  for (const auto& r : rows)
    out << scene::task_name(r.task) << ',' << scene::constraint_name(r.constraint) << ',' << r.k << ','
        << r.recall << ',' << r.n_frames << '\n';
  return out.str();
}

nlohmann::json MetricTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"task", scene::task_name(r.task)},
                   {"constraint", scene::constraint_name(r.constraint)},
                   {"K", r.k},
                   {"recall", r.recall},
                   {"n_frames", r.n_frames}});
  return {{"metrics", arr}};
}

MetricTable evaluate(const std::vector<scene::AnnotatedVideo>& dataset, const Predictor& predict,
                     const std::vector<Task>& tasks, const std::vector<std::size_t>& ks,
                     const std::vector<Constraint>& constraints) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  for (std::size_t k : ks)
    if (k == 0) throw std::invalid_argument("evaluate: K must be >= 1");
  MetricTable table;
  for (Task task : tasks) {
    // sums[c][k]
    std::vector<std::vector<double>> sums(constraints.size(), std::vector<double>(ks.size(), 0.0));
    std::size_t frames = 0;
    for (const auto& video : dataset) {
      const scene::SceneGraphPrediction raw = predict(video, task);
      if (raw.frames.size() != video.frames.size()) throw std::runtime_error("evaluate: predictor frame mismatch");
      for (std::size_t c = 0; c < constraints.size(); ++c) {
        const auto pred = scene::apply_constraint(raw, constraints[c]);
        for (std::size_t t = 0; t < video.frames.size(); ++t) {
          if (video.frames[t].gt_triplets.empty()) continue;
          for (std::size_t j = 0; j < ks.size(); ++j) {
            FrameRecall r = frame_recall(pred.frames[t], video.frames[t], ks[j], task);
            sums[c][j] += double(r.matched) / double(r.total);
          }
        }
      }
      for (const auto& f : video.frames) frames += f.gt_triplets.empty() ? 0 : 1;
    }
    for (std::size_t c = 0; c < constraints.size(); ++c)
      for (std::size_t j = 0; j < ks.size(); ++j)
        table.rows.push_back({task, constraints[c], ks[j], frames ? sums[c][j] / double(frames) : 0.0, frames});
  }
  return table;
}

namespace {

struct ProbeData {
  numerics::Tensor x;
  std::vector<std::size_t> y;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> where;  // video, frame, s, o
};

ProbeData probe_rows(const std::vector<scene::AnnotatedVideo>& videos, const scene::Vocabulary& vocab) {
  ProbeData d;
  std::vector<double> flat;
  std::size_t width = 0;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (std::size_t t = 0; t < videos[v].frames.size(); ++t) {
      const auto& f = videos[v].frames[t];
      const std::size_t p = scene::person_index(f, vocab);
      for (const auto& tr : f.gt_triplets) {
        std::vector<double> row = f.detections[p].feature;
        const auto& o = f.detections.at(tr.object);
        row.insert(row.end(), o.feature.begin(), o.feature.end());
        for (const auto* b : {&f.detections[p].box, &o.box}) row.insert(row.end(), {b->x, b->y, b->w, b->h});
        if (width == 0) width = row.size();
        if (row.size() != width) throw std::invalid_argument("logistic_probe: inconsistent feature width");
        flat.insert(flat.end(), row.begin(), row.end());
        d.y.push_back(tr.predicate);
        d.where.emplace_back(v, t, tr.subject, tr.object);
      }
    }
  }
  if (d.y.empty()) throw std::invalid_argument("logistic_probe: no labelled pairs");
  d.x = numerics::Tensor({d.y.size(), width}, std::move(flat));
  return d;
}

}  // namespace

ProbeResult logistic_probe(const std::vector<scene::AnnotatedVideo>& train,
                           const std::vector<scene::AnnotatedVideo>& test, const scene::Vocabulary& vocab,
                           const ProbeConfig& cfg, std::uint64_t seed) {
  ProbeData tr = probe_rows(train, vocab);
  ProbeData te = probe_rows(test, vocab);
  const std::size_t n = tr.x.rows(), w = tr.x.cols();
  if (te.x.cols() != w) throw std::invalid_argument("logistic_probe: train/test width mismatch");
  // Standardize with training statistics.
  std::vector<double> mu(w, 0.0), sd(w, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < w; ++k) mu[k] += tr.x(i, k) / double(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < w; ++k) sd[k] += (tr.x(i, k) - mu[k]) * (tr.x(i, k) - mu[k]) / double(n);
  for (double& s : sd) s = s > 1e-12 ? std::sqrt(s) : 1.0;
  for (auto* x : {&tr.x, &te.x})
    for (std::size_t i = 0; i < x->rows(); ++i)
      for (std::size_t k = 0; k < w; ++k) (*x)(i, k) = ((*x)(i, k) - mu[k]) / sd[k];

  numerics::Rng rng(seed);
  numerics::Linear model("probe", w, vocab.num_predicates(), rng);
  numerics::AdamW opt(model.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, 0.0});
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    numerics::Graph g;
    g.backward(numerics::cross_entropy(model(g, g.constant(tr.x)), tr.y));
    opt.step();
  }
  auto logits = [&](const numerics::Tensor& x) {
    numerics::Graph g;
    return model(g, g.constant(x)).value();
  };
  ProbeResult res;
  const numerics::Tensor zt = logits(tr.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = zt.row_span(i);
    correct += std::size_t(std::max_element(row.begin(), row.end()) - row.begin()) == tr.y[i];
  }
  res.train_accuracy = double(correct) / double(n);

  const numerics::Tensor probs = numerics::softmax_rows(logits(te.x));
  std::vector<scene::SceneGraphPrediction> preds(test.size());
  for (std::size_t v = 0; v < test.size(); ++v) preds[v].frames.resize(test[v].frames.size());
  for (std::size_t i = 0; i < te.y.size(); ++i) {
    const auto [v, t, s, o] = te.where[i];
    for (std::size_t k = 0; k < vocab.num_predicates(); ++k)
      preds[v].frames[t].triplets.push_back({s, k, o, probs(i, k)});
  }
  res.metrics = evaluate(
      test,
      [&](const scene::AnnotatedVideo& video, Task) {
        auto p = preds.at(std::size_t(&video - test.data()));
        for (auto& f : p.frames) scene::rank_triplets(f.triplets);
        return p;
      },
      {Task::kPredCls}, {10, 20, 50}, {Constraint::kWith, Constraint::kNo});
  return res;
}

}  // namespace dsgg::evalkit
