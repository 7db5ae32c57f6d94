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

#include "dsgg/pipeline/recipe.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dsgg::pipeline {

using numerics::derive_seed;

Datasets make_datasets(const PipelineConfig& cfg) {
  const auto vocab = scene::Vocabulary::desk_default();
  Datasets d;
  d.train = synthgen::generate(derive_seed(cfg.seed, 1), cfg.data, vocab);
  synthgen::SynthConfig test = cfg.data;
  test.n_videos = cfg.test_videos;
  d.test = synthgen::generate(derive_seed(cfg.seed, 2), test, vocab);
  return d;
}

Tensor feature_matrix(const std::vector<scene::AnnotatedVideo>& videos) {
  std::size_t rows = 0, d = 0;
  for (const auto& v : videos)
    for (const auto& f : v.frames)
      for (const auto& det : f.detections) {
        if (rows == 0) d = det.feature.size();
        if (det.feature.size() != d) throw std::invalid_argument("feature_matrix: ragged features");
        ++rows;
      }
  if (rows == 0 || d == 0) throw std::invalid_argument("feature_matrix: no features");
  Tensor out({rows, d});
  std::size_t r = 0;
  for (const auto& v : videos)
    for (const auto& f : v.frames)
      for (const auto& det : f.detections) std::copy(det.feature.begin(), det.feature.end(), out.row_span(r++).begin());
  return out;
}

vqvae::VqvaeModel train_quantizer(const PipelineConfig& cfg, const std::vector<scene::AnnotatedVideo>& train,
                                  vqvae::TrainStats* stats) {
  vqvae::VqvaeConfig vc = cfg.vqvae;
  vc.d_feat = cfg.data.d_feat;
  return vqvae::train_vqvae(feature_matrix(train), vc, derive_seed(cfg.seed, 3), stats);
}

std::vector<double> unit_frequencies(const vqvae::VqvaeModel& vq) {
  const std::size_t m = vq.codebook.value.rows();
  if (vq.usage.size() != m) throw std::invalid_argument("quantizer usage does not match its codebook");
  const double total = std::accumulate(vq.usage.begin(), vq.usage.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("quantizer usage is empty");
  std::vector<double> f(m);
  for (std::size_t i = 0; i < m; ++i) f[i] = vq.usage[i] / total;
  return f;
}

VocabResult build_vocab(const PipelineConfig& cfg, const vqvae::VqvaeModel& vq) {
  VocabResult r;
  const Tensor& units = vq.codebook.value;
  const auto freqs = unit_frequencies(vq);
  r.sweep = otvocab::update_codebook(units, freqs, cfg.ot.delta_s, cfg.ot.sweep, cfg.ot.refine);
  if (cfg.ablation.ot == OtMode::kOn) {
    r.codebook = r.sweep.codebook;
  } else if (cfg.ablation.ot == OtMode::kKmeans) {
    r.codebook = otvocab::kmeans_codebook(units, freqs, r.sweep.codebook.size());
  }
  return r;
}

std::string sweep_csv(const otvocab::UpdateResult& sweep) {
  std::ostringstream out;
  out.precision(17);
  out << "k,size,H,dH\n";
  for (const auto& row : sweep.rows) out << row.k << ',' << row.size << ',' << row.entropy << ',' << row.delta << '\n';
  return out.str();
}

std::optional<reasoner::ToyTransformer> pretrain(const PipelineConfig& cfg, reasoner::PretrainStats* stats) {
  if (cfg.reasoner.variant == ReasonerVariant::kNone) return std::nullopt;
  reasoner::PretrainConfig pc;
  pc.steps = cfg.reasoner.pretrain_steps;
  pc.videos = cfg.reasoner.pretrain_videos;
  pc.lr = cfg.reasoner.pretrain_lr;
  pc.model = cfg.reasoner.effective_model();
  return reasoner::pretrain_base(derive_seed(cfg.seed, 4), pc, stats);
}

RecipeResult run_recipe(const PipelineConfig& cfg, const Datasets& data, const SharedStages* shared,
                        std::function<void(const std::string&)> log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  vqvae::VqvaeModel vq;
  std::optional<reasoner::ToyTransformer> base;
  if (shared) {
    vq = shared->vq;
    if (cfg.reasoner.variant != ReasonerVariant::kNone) {
      if (!shared->base) throw std::invalid_argument("run_recipe: shared stages lack a base model");
      base = shared->base;
    }
  } else {
    say("stage 1: training the quantizer");
    vq = train_quantizer(cfg, data.train);
    if (cfg.reasoner.variant != ReasonerVariant::kNone) say("pretraining the reasoner base");
    base = pretrain(cfg);
  }
  say("building the vocabulary");
  VocabResult vocab = build_vocab(cfg, vq);
  FullModel model(cfg, std::move(vq), vocab.codebook.units, std::move(base));
  say("stage 2");
  Stage2Options opts;
  opts.log = log;
  Stage2Log slog;
  train_stage2(model, data.train, opts, &slog);
  say("evaluating");
  auto metrics = evaluate_model(model, data.test, {scene::Task::kPredCls, scene::Task::kSgCls}, cfg.eval_ks,
                                {scene::Constraint::kWith, scene::Constraint::kNo});
  return {std::move(model), std::move(vocab), std::move(slog), std::move(metrics)};
}

}  // namespace dsgg::pipeline
