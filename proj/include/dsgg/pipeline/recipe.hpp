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

#ifndef DSGG_PIPELINE_RECIPE_HPP_
#define DSGG_PIPELINE_RECIPE_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsgg/otvocab/transport.hpp"
#include "dsgg/pipeline/model.hpp"

namespace dsgg::pipeline {

struct Datasets {
  std::vector<scene::AnnotatedVideo> train;
  std::vector<scene::AnnotatedVideo> test;
};

// train: data.n_videos videos from derive_seed(seed, 1); test: test_videos
// from derive_seed(seed, 2).
Datasets make_datasets(const PipelineConfig& cfg);

// Every detection feature of the corpus as one row.
Tensor feature_matrix(const std::vector<scene::AnnotatedVideo>& videos);

// Stage 1 on the training features, seeded with derive_seed(seed, 3).
vqvae::VqvaeModel train_quantizer(const PipelineConfig& cfg, const std::vector<scene::AnnotatedVideo>& train,
                                  vqvae::TrainStats* stats = nullptr);

struct VocabResult {
  otvocab::RefinedCodebook codebook;
  otvocab::UpdateResult sweep;  // the transport sweep, run for every mode
};

// Normalized usage of the learned units.
std::vector<double> unit_frequencies(const vqvae::VqvaeModel& vq);

// Refined codebook for the configured ot mode: the sweep result, or k-means
// at the size the sweep chose. Empty for modes without a codebook.
VocabResult build_vocab(const PipelineConfig& cfg, const vqvae::VqvaeModel& vq);

std::string sweep_csv(const otvocab::UpdateResult& sweep);

// Base pretraining, seeded with derive_seed(seed, 4). nullopt for variant none.
std::optional<reasoner::ToyTransformer> pretrain(const PipelineConfig& cfg,
                                                 reasoner::PretrainStats* stats = nullptr);

// Stage outputs reused across ablation runs.
struct SharedStages {
  vqvae::VqvaeModel vq;
  std::optional<reasoner::ToyTransformer> base;
};

struct RecipeResult {
  FullModel model;
  VocabResult vocab;
  Stage2Log log;
  evalkit::MetricTable metrics;
};

// Vocabulary, stage 2 and evaluation on `data.test`. Stage 1 and the base
// come from `shared` when given, otherwise they are trained here.
RecipeResult run_recipe(const PipelineConfig& cfg, const Datasets& data, const SharedStages* shared = nullptr,
                        std::function<void(const std::string&)> log = {});

}  // namespace dsgg::pipeline

#endif  // DSGG_PIPELINE_RECIPE_HPP_
