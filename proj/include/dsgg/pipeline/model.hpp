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

#ifndef DSGG_PIPELINE_MODEL_HPP_
#define DSGG_PIPELINE_MODEL_HPP_

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "dsgg/evalkit/evalkit.hpp"
#include "dsgg/numerics/checkpoint.hpp"
#include "dsgg/numerics/optim.hpp"
#include "dsgg/otvocab/signal.hpp"
#include "dsgg/pipeline/config.hpp"
#include "dsgg/reasoner/reasoner.hpp"
#include "dsgg/sggpred/sggpred.hpp"
#include "dsgg/sia/sia.hpp"
#include "dsgg/vqvae/vqvae.hpp"

namespace dsgg::pipeline {

using numerics::Graph;
using numerics::ParameterList;
using numerics::Tensor;
using numerics::Var;

// One video after the frozen quantizer.
struct VideoInputs {
  std::vector<Tensor> features;  // per frame, n x l: quantized units, or raw latents without discretization
  std::vector<std::vector<scene::Box>> boxes;
  std::vector<sggpred::PairIndex> pairs;
  sggpred::PairTargets targets;
  double width = 640.0;
  double height = 480.0;
};

// The stage-2 model: frozen VQ-VAE and refined codebook, SIA, signal
// generator M (or its ablation replacement), reasoner and predictor.
class FullModel {
 public:
  FullModel(const PipelineConfig& cfg, vqvae::VqvaeModel vq, Tensor refined_units,
            std::optional<reasoner::ToyTransformer> base);

  VideoInputs prepare(const scene::AnnotatedVideo& video) const;

  // Soft signal for training, hard for inference.
  sggpred::PredictorOutput forward(Graph& g, const VideoInputs& in, otvocab::SignalMode mode);
  Var loss(Graph& g, const VideoInputs& in);
  // Ranked, unconstrained.
  scene::SceneGraphPrediction predict(const scene::AnnotatedVideo& video, scene::Task task);

  // Phase A: SIA, M (or temporal conv), reasoner input projection, predictor.
  ParameterList phase_a_parameters();
  // Phase A plus LoRA adapters and prompt prefix; with ablation.lora off,
  // plus the whole base instead.
  ParameterList phase_b_parameters();
  // Every parameter of the model, frozen or not.
  ParameterList all_parameters();
  // Marks exactly `trainable` as unfrozen and clears every gradient.
  void set_trainable(const ParameterList& trainable);

  void save(numerics::Checkpoint& ckpt) const;
  static FullModel load(const numerics::Checkpoint& ckpt);

  PipelineConfig cfg;
  scene::Vocabulary vocab = scene::Vocabulary::desk_default();
  vqvae::VqvaeModel vq;
  Tensor units;  // refined codebook C+, s x l
  sia::Sia sia;
  otvocab::SignalGenerator generator;
  numerics::Linear temporal_conv;  // 3l -> l over [t-1, t, t+1]
  std::optional<reasoner::Reasoner> reasoner;
  sggpred::SggPredictor predictor;

 private:
  Var signal(Graph& g, Var tokens, otvocab::SignalMode mode);
};

struct LogRow {
  std::size_t iteration = 0;  // iterations completed
  char phase = 'A';
  double loss = 0.0;          // mean over the logging window
};

struct Stage2Options {
  // Periodic checkpoints and the last-good dump on a non-finite loss.
  std::filesystem::path checkpoint_path;
  // Continue from a checkpoint written by a previous run.
  const numerics::Checkpoint* resume = nullptr;
  // Stop after this many total iterations (for resume tests).
  std::size_t stop_after = std::numeric_limits<std::size_t>::max();
  std::function<void(const std::string&)> log;
  // Checks that frozen parameters received no gradient, every iteration.
  bool audit_every_step = false;
};

struct Stage2Log {
  std::vector<LogRow> rows;
  std::vector<double> losses;  // every iteration run in this call
  std::size_t audits = 0;
  std::size_t end_iteration = 0;
};

// Checkpoint of the model plus optimizer state at `iteration`.
numerics::Checkpoint training_checkpoint(const FullModel& model, const numerics::AdamW* opt, std::size_t iteration,
                                         char phase);

// Phase A then phase B. On a non-finite loss writes <checkpoint_path>.last_good
// (when a path is set) and throws std::runtime_error.
void train_stage2(FullModel& model, const std::vector<scene::AnnotatedVideo>& train, const Stage2Options& opts,
                  Stage2Log* log = nullptr);

// Throws std::logic_error when any parameter outside `trainable` holds a
// nonzero gradient.
void audit_frozen(const ParameterList& all, const ParameterList& trainable);

scene::SceneGraphPrediction infer(FullModel& model, const scene::AnnotatedVideo& video, scene::Task task,
                                  scene::Constraint constraint);

evalkit::MetricTable evaluate_model(FullModel& model, const std::vector<scene::AnnotatedVideo>& data,
                                    const std::vector<scene::Task>& tasks, const std::vector<std::size_t>& ks,
                                    const std::vector<scene::Constraint>& constraints);

}  // namespace dsgg::pipeline

#endif  // DSGG_PIPELINE_MODEL_HPP_
