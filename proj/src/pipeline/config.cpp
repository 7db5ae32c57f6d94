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

#include "dsgg/pipeline/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsgg::pipeline {

using nlohmann::json;

std::string_view ot_mode_name(OtMode m) {
  switch (m) {
    case OtMode::kOn: return "on";
    case OtMode::kOff: return "off";
    case OtMode::kTemporalConv: return "temporal_conv";
    case OtMode::kKmeans: return "kmeans";
  }
  return "?";
}

std::string_view variant_name(ReasonerVariant v) {
  switch (v) {
    case ReasonerVariant::kBase: return "base";
    case ReasonerVariant::kSmall: return "small";
    case ReasonerVariant::kNone: return "none";
  }
  return "?";
}

namespace {

OtMode parse_ot(const std::string& s) {
  for (OtMode m : {OtMode::kOn, OtMode::kOff, OtMode::kTemporalConv, OtMode::kKmeans})
    if (ot_mode_name(m) == s) return m;
  throw std::invalid_argument("config: ablation.ot must be on|off|temporal_conv|kmeans, got '" + s + "'");
}

ReasonerVariant parse_variant(const std::string& s) {
  for (ReasonerVariant v : {ReasonerVariant::kBase, ReasonerVariant::kSmall, ReasonerVariant::kNone})
    if (variant_name(v) == s) return v;
  throw std::invalid_argument("config: reasoner.variant must be base|small|none, got '" + s + "'");
}

otvocab::SweepOrder parse_sweep(const std::string& s) {
  if (s == "ascending") return otvocab::SweepOrder::kAscending;
  if (s == "descending") return otvocab::SweepOrder::kDescending;
  throw std::invalid_argument("config: ot.sweep must be ascending|descending, got '" + s + "'");
}

// Overlays `user` onto `base`, rejecting keys that base does not have.
void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw std::invalid_argument("config: unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_into(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
T read(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + section + "." + key + ": " + e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

}  // namespace

reasoner::TransformerConfig ReasonerSettings::effective_model() const {
  return variant == ReasonerVariant::kSmall ? reasoner::TransformerConfig::small() : model;
}

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["data"] = {{"n_videos", data.n_videos},
               {"test_videos", test_videos},
               {"frames_per_video", data.frames_per_video},
               {"objects_per_frame", data.objects_per_frame},
               {"d_feat", data.d_feat},
               {"noise", data.noise},
               {"margin", data.margin},
               {"frame_w", data.frame_w},
               {"frame_h", data.frame_h},
               {"world_seed", data.world_seed},
               {"latch_start_prob", data.latch_start_prob},
               {"latch_release_prob", data.latch_release_prob}};
  j["vqvae"] = {{"hidden", vqvae.hidden},         {"latent", vqvae.latent},
                {"codebook", vqvae.codebook_size}, {"lambda", vqvae.lambda},
                {"lr", vqvae.lr},                 {"weight_decay", vqvae.weight_decay},
                {"iterations", vqvae.iterations}, {"batch", vqvae.batch},
                {"reinit_dead", vqvae.reinit_dead}};
  j["sia"] = {{"pos_hidden", sia.pos_hidden}, {"pos_dim", sia.pos_dim}, {"threshold", sia.threshold}};
  j["ot"] = {{"delta_s", ot.delta_s},
             {"sweep", ot.sweep == otvocab::SweepOrder::kAscending ? "ascending" : "descending"},
             {"epsilon", ot.refine.epsilon},
             {"anneal", ot.refine.anneal},
             {"max_rounds", ot.refine.max_rounds},
             {"tol", ot.refine.tol},
             {"temperature_scale", ot.refine.temperature_scale},
             {"signal_hidden", ot.signal_hidden}};
  j["reasoner"] = {{"variant", variant_name(reasoner.variant)},
                   {"layers", reasoner.model.layers},
                   {"dim", reasoner.model.dim},
                   {"heads", reasoner.model.heads},
                   {"ffn", reasoner.model.ffn},
                   {"max_seq", reasoner.model.max_seq},
                   {"prefix", reasoner.prefix},
                   {"lora_rank", reasoner.lora.rank},
                   {"lora_alpha", reasoner.lora.alpha},
                   {"pretrain_steps", reasoner.pretrain_steps},
                   {"pretrain_videos", reasoner.pretrain_videos},
                   {"pretrain_lr", reasoner.pretrain_lr}};
  j["sgg"] = {{"width", sgg.width}, {"heads", sgg.heads}, {"ffn", sgg.ffn}, {"alpha", sgg.alpha}};
  j["train"] = {{"phase_a_iters", train.phase_a_iters}, {"phase_b_iters", train.phase_b_iters},
                {"lr_a", train.lr_a},                   {"lr_b", train.lr_b},
                {"weight_decay", train.weight_decay},   {"log_every", train.log_every},
                {"checkpoint_every", train.checkpoint_every}};
  j["ablation"] = {{"ot", ot_mode_name(ablation.ot)}, {"discretize", ablation.discretize}, {"lora", ablation.lora}};
  j["eval"] = {{"ks", eval_ks}};
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& user) {
  json j = PipelineConfig{}.to_json();
  merge_into(j, user, "");
  PipelineConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: seed: ") + e.what());
  }
  c.data.n_videos = read<std::size_t>(j, "data", "n_videos");
  c.test_videos = read<std::size_t>(j, "data", "test_videos");
  c.data.frames_per_video = read<std::size_t>(j, "data", "frames_per_video");
  c.data.objects_per_frame = read<std::size_t>(j, "data", "objects_per_frame");
  c.data.d_feat = read<std::size_t>(j, "data", "d_feat");
  c.data.noise = read<double>(j, "data", "noise");
  c.data.margin = read<double>(j, "data", "margin");
  c.data.frame_w = read<double>(j, "data", "frame_w");
  c.data.frame_h = read<double>(j, "data", "frame_h");
  c.data.world_seed = read<std::uint64_t>(j, "data", "world_seed");
  c.data.latch_start_prob = read<double>(j, "data", "latch_start_prob");
  c.data.latch_release_prob = read<double>(j, "data", "latch_release_prob");

  c.vqvae.d_feat = c.data.d_feat;
  c.vqvae.hidden = read<std::size_t>(j, "vqvae", "hidden");
  c.vqvae.latent = read<std::size_t>(j, "vqvae", "latent");
  c.vqvae.codebook_size = read<std::size_t>(j, "vqvae", "codebook");
  c.vqvae.lambda = read<double>(j, "vqvae", "lambda");
  c.vqvae.lr = read<double>(j, "vqvae", "lr");
  c.vqvae.weight_decay = read<double>(j, "vqvae", "weight_decay");
  c.vqvae.iterations = read<std::size_t>(j, "vqvae", "iterations");
  c.vqvae.batch = read<std::size_t>(j, "vqvae", "batch");
  c.vqvae.reinit_dead = read<bool>(j, "vqvae", "reinit_dead");

  c.sia.latent = c.vqvae.latent;
  c.sia.pos_hidden = read<std::size_t>(j, "sia", "pos_hidden");
  c.sia.pos_dim = read<std::size_t>(j, "sia", "pos_dim");
  c.sia.threshold = read<double>(j, "sia", "threshold");

  c.ot.delta_s = read<std::size_t>(j, "ot", "delta_s");
  c.ot.sweep = parse_sweep(read<std::string>(j, "ot", "sweep"));
  c.ot.refine.epsilon = read<double>(j, "ot", "epsilon");
  c.ot.refine.anneal = read<double>(j, "ot", "anneal");
  c.ot.refine.max_rounds = read<std::size_t>(j, "ot", "max_rounds");
  c.ot.refine.tol = read<double>(j, "ot", "tol");
  c.ot.refine.temperature_scale = read<double>(j, "ot", "temperature_scale");
  c.ot.signal_hidden = read<std::size_t>(j, "ot", "signal_hidden");

  c.reasoner.variant = parse_variant(read<std::string>(j, "reasoner", "variant"));
  c.reasoner.model.layers = read<std::size_t>(j, "reasoner", "layers");
  c.reasoner.model.dim = read<std::size_t>(j, "reasoner", "dim");
  c.reasoner.model.heads = read<std::size_t>(j, "reasoner", "heads");
  c.reasoner.model.ffn = read<std::size_t>(j, "reasoner", "ffn");
  c.reasoner.model.max_seq = read<std::size_t>(j, "reasoner", "max_seq");
  c.reasoner.prefix = read<std::size_t>(j, "reasoner", "prefix");
  c.reasoner.lora.rank = read<std::size_t>(j, "reasoner", "lora_rank");
  c.reasoner.lora.alpha = read<double>(j, "reasoner", "lora_alpha");
  c.reasoner.pretrain_steps = read<std::size_t>(j, "reasoner", "pretrain_steps");
  c.reasoner.pretrain_videos = read<std::size_t>(j, "reasoner", "pretrain_videos");
  c.reasoner.pretrain_lr = read<double>(j, "reasoner", "pretrain_lr");

  c.sgg.width = read<std::size_t>(j, "sgg", "width");
  c.sgg.heads = read<std::size_t>(j, "sgg", "heads");
  c.sgg.ffn = read<std::size_t>(j, "sgg", "ffn");
  c.sgg.alpha = read<double>(j, "sgg", "alpha");

  c.train.phase_a_iters = read<std::size_t>(j, "train", "phase_a_iters");
  c.train.phase_b_iters = read<std::size_t>(j, "train", "phase_b_iters");
  c.train.lr_a = read<double>(j, "train", "lr_a");
  c.train.lr_b = read<double>(j, "train", "lr_b");
  c.train.weight_decay = read<double>(j, "train", "weight_decay");
  c.train.log_every = read<std::size_t>(j, "train", "log_every");
  c.train.checkpoint_every = read<std::size_t>(j, "train", "checkpoint_every");

  c.ablation.ot = parse_ot(read<std::string>(j, "ablation", "ot"));
  c.ablation.discretize = read<bool>(j, "ablation", "discretize");
  c.ablation.lora = read<bool>(j, "ablation", "lora");
  c.eval_ks = read<std::vector<std::size_t>>(j, "eval", "ks");

  require(c.data.n_videos > 0 && c.test_videos > 0, "data.n_videos and data.test_videos must be positive");
  require(c.ot.delta_s > 0, "ot.delta_s must be positive");
  require(c.train.log_every > 0, "train.log_every must be positive");
  require(c.sgg.alpha >= 0.0, "sgg.alpha must be >= 0");
  require(c.reasoner.prefix + c.data.frames_per_video <= c.reasoner.effective_model().max_seq,
          "reasoner.prefix + data.frames_per_video exceeds reasoner.max_seq");
  for (std::size_t k : c.eval_ks) require(k > 0, "eval.ks entries must be >= 1");
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string PipelineConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw std::invalid_argument("override '" + path + "': not an object path");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() && !node->is_null()) throw std::invalid_argument("override '" + path + "': bad path");
  (*node)[parts.back()] = value;
}

}  // namespace dsgg::pipeline
