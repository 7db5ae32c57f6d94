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

#ifndef DSGG_PIPELINE_CONFIG_HPP_
#define DSGG_PIPELINE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsgg/otvocab/transport.hpp"
#include "dsgg/reasoner/reasoner.hpp"
#include "dsgg/sia/sia.hpp"
#include "dsgg/synthgen/synthgen.hpp"
#include "dsgg/vqvae/vqvae.hpp"

namespace dsgg::pipeline {

enum class OtMode { kOn, kOff, kTemporalConv, kKmeans };
enum class ReasonerVariant { kBase, kSmall, kNone };

struct OtSettings {
  std::size_t delta_s = 8;
  otvocab::SweepOrder sweep = otvocab::SweepOrder::kAscending;
  otvocab::RefineOptions refine;
  std::size_t signal_hidden = 32;
};

struct ReasonerSettings {
  ReasonerVariant variant = ReasonerVariant::kBase;
  reasoner::TransformerConfig model;
  std::size_t prefix = 8;
  reasoner::LoraConfig lora;
  std::size_t pretrain_steps = 400;
  std::size_t pretrain_videos = 64;
  double pretrain_lr = 1e-3;

  // The transformer shape actually used, after the variant is applied.
  reasoner::TransformerConfig effective_model() const;
};

struct SggSettings {
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  double alpha = 0.5;
};

struct TrainSettings {
  std::size_t phase_a_iters = 3000;
  std::size_t phase_b_iters = 5000;
  double lr_a = 1e-5;
  double lr_b = 3e-4;
  double weight_decay = 0.01;
  std::size_t log_every = 100;
  std::size_t checkpoint_every = 1000;
};

struct AblationSettings {
  OtMode ot = OtMode::kOn;
  bool discretize = true;
  bool lora = true;  // false: phase B fine-tunes the whole base instead
};

// Every hyperparameter of the recipe. The JSON form is the single source of
// truth; each field has a key and a default.
struct PipelineConfig {
  std::uint64_t seed = 7;
  synthgen::SynthConfig data;
  std::size_t test_videos = 50;
  vqvae::VqvaeConfig vqvae;
  sia::SiaConfig sia;
  OtSettings ot;
  ReasonerSettings reasoner;
  SggSettings sgg;
  TrainSettings train;
  AblationSettings ablation;
  std::vector<std::size_t> eval_ks{10, 20, 50};

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys and bad values throw.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  // FNV-1a 64 of the canonical JSON, as 16 hex digits.
  std::string hash() const;
};

// "a.b.c=value" with a JSON value, falling back to a bare string.
void apply_override(nlohmann::json& j, const std::string& assignment);

std::uint64_t fnv1a64(std::string_view bytes);

std::string_view ot_mode_name(OtMode m);
std::string_view variant_name(ReasonerVariant v);

}  // namespace dsgg::pipeline

#endif  // DSGG_PIPELINE_CONFIG_HPP_
