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

#include "dsgg/pipeline/model.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace dsgg::pipeline {

using numerics::Rng;

FullModel::FullModel(const PipelineConfig& c, vqvae::VqvaeModel v, Tensor refined,
                     std::optional<reasoner::ToyTransformer> base)
    : cfg(c), vq(std::move(v)), units(std::move(refined)) {
  Rng rng(numerics::derive_seed(cfg.seed, 5));
  const std::size_t l = vq.codebook.value.cols();
  if (l != cfg.vqvae.latent) throw std::invalid_argument("model: VQ-VAE latent width != config vqvae.latent");
  sia::SiaConfig sc = cfg.sia;
  sc.latent = l;
  sia = sia::Sia(sc, rng);
  const OtMode ot = cfg.ablation.ot;
  if (ot == OtMode::kOn || ot == OtMode::kKmeans) {
    if (units.empty() || units.cols() != l) throw std::invalid_argument("model: refined codebook missing or wrong width");
    generator = otvocab::SignalGenerator(l, cfg.ot.signal_hidden, units.rows(), rng);
  } else if (ot == OtMode::kTemporalConv) {
    temporal_conv = numerics::Linear("tc.conv", 3 * l, l, rng);
  }
  std::size_t memory_dim = l;
  if (cfg.reasoner.variant != ReasonerVariant::kNone) {
    if (!base) throw std::invalid_argument("model: reasoner base checkpoint missing");
    if (!(base->config() == cfg.reasoner.effective_model()))
      throw std::invalid_argument("model: reasoner base shape does not match the config");
    reasoner::ReasonerConfig rc{base->config(), cfg.reasoner.lora, cfg.reasoner.prefix, l};
    reasoner.emplace(std::move(*base), rc, rng);
    memory_dim = reasoner->dim();
  }
  sggpred::PredictorConfig pc;
  pc.pair_dim = 2 * (l + sc.pos_dim);
  pc.memory_dim = memory_dim;
  pc.width = cfg.sgg.width;
  pc.heads = cfg.sgg.heads;
  pc.ffn = cfg.sgg.ffn;
  pc.max_frames = 64;
  pc.num_objects = vocab.num_objects();
  pc.num_predicates = vocab.num_predicates();
  predictor = sggpred::SggPredictor(pc, rng);
}

VideoInputs FullModel::prepare(const scene::AnnotatedVideo& video) const {
  scene::validate(video, vocab);
  VideoInputs in;
  in.width = video.width;
  in.height = video.height;
  auto& self = const_cast<FullModel&>(*this);
  const Tensor& code = vq.codebook.value;
  for (const auto& f : video.frames) {
    const std::size_t n = f.detections.size(), d = cfg.data.d_feat;
    Tensor x({n, d});
    std::vector<scene::Box> boxes;
    for (std::size_t i = 0; i < n; ++i) {
      if (f.detections[i].feature.size() != d)
        throw std::invalid_argument("model: detection feature width != data.d_feat");
      std::copy(f.detections[i].feature.begin(), f.detections[i].feature.end(), x.row_span(i).begin());
      boxes.push_back(f.detections[i].box);
    }
    Tensor z = self.vq.encode(x);
    if (cfg.ablation.discretize) {
      const auto idx = vqvae::quantize_rows(z, code);
      for (std::size_t i = 0; i < n; ++i) {
        auto src = code.row_span(idx[i]);
        std::copy(src.begin(), src.end(), z.row_span(i).begin());
      }
    }
    in.features.push_back(std::move(z));
    in.boxes.push_back(std::move(boxes));
  }
  in.pairs = sggpred::enumerate_pairs(video, vocab);
  in.targets = sggpred::make_targets(video, in.pairs, vocab.num_predicates());
  return in;
}

Var FullModel::signal(Graph& g, Var tokens, otvocab::SignalMode mode) {
  switch (cfg.ablation.ot) {
    case OtMode::kOn:
    case OtMode::kKmeans:
      return generator.generate(g, tokens, units, mode);
    case OtMode::kOff:
      return tokens;
    case OtMode::kTemporalConv: {
      const std::size_t T = tokens.rows(), l = tokens.cols();
      Var zero = g.constant(Tensor({1, l}));
      Var prev = zero, next = zero;
      if (T > 1) {
        std::vector<Var> p{zero, numerics::slice_rows(tokens, 0, T - 1)};
        std::vector<Var> n{numerics::slice_rows(tokens, 1, T - 1), zero};
        prev = numerics::concat_rows(p);
        next = numerics::concat_rows(n);
      }
      std::vector<Var> cols{prev, tokens, next};
      return temporal_conv(g, numerics::concat_cols(cols));
    }
  }
  throw std::logic_error("unreachable");
}

sggpred::PredictorOutput FullModel::forward(Graph& g, const VideoInputs& in, otvocab::SignalMode mode) {
  if (in.features.empty()) throw std::invalid_argument("model: video has no frames");
  std::vector<Var> tokens, augmented;
  for (std::size_t t = 0; t < in.features.size(); ++t) {
    auto r = sia.frame_token(g, g.constant(in.features[t]), in.boxes[t], in.width, in.height);
    tokens.push_back(r.token);
    augmented.push_back(r.augmented);
  }
  Var sig = signal(g, tokens.size() == 1 ? tokens[0] : numerics::concat_rows(tokens), mode);
  Var memory = reasoner ? reasoner->reason(g, sig, cfg.ablation.lora) : sig;
  Var pairs = sggpred::pair_features(g, augmented, in.pairs);
  return predictor.forward(g, pairs, in.pairs, memory);
}

Var FullModel::loss(Graph& g, const VideoInputs& in) {
  auto out = forward(g, in, otvocab::SignalMode::kSoft);
  return sggpred::sgg_loss(out.class_logits, out.predicate_logits, in.targets, cfg.sgg.alpha);
}

scene::SceneGraphPrediction FullModel::predict(const scene::AnnotatedVideo& video, scene::Task task) {
  VideoInputs in = prepare(video);
  Graph g;
  auto out = forward(g, in, otvocab::SignalMode::kHard);
  return sggpred::decode(out.class_logits.value(), out.predicate_logits.value(), in.pairs, video, task, vocab);
}

ParameterList FullModel::phase_a_parameters() {
  ParameterList out = sia.parameters();
  if (cfg.ablation.ot == OtMode::kOn || cfg.ablation.ot == OtMode::kKmeans) {
    auto p = generator.parameters();
    out.insert(out.end(), p.begin(), p.end());
  } else if (cfg.ablation.ot == OtMode::kTemporalConv) {
    auto p = temporal_conv.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (reasoner) {
    auto p = reasoner->interface_parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto p = predictor.parameters();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

ParameterList FullModel::phase_b_parameters() {
  ParameterList out = phase_a_parameters();
  if (reasoner) {
    auto p = cfg.ablation.lora ? reasoner->adapter_parameters() : reasoner->base.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

ParameterList FullModel::all_parameters() {
  ParameterList out = vq.parameters();
  auto a = phase_a_parameters();
  out.insert(out.end(), a.begin(), a.end());
  if (reasoner) {
    auto b = reasoner->base.parameters();
    auto ad = reasoner->adapter_parameters();
    out.insert(out.end(), b.begin(), b.end());
    out.insert(out.end(), ad.begin(), ad.end());
  }
  return out;
}

void FullModel::set_trainable(const ParameterList& trainable) {
  const ParameterList all = all_parameters();
  for (auto* p : all) p->grad = Tensor(p->value.shape());
  numerics::set_frozen(all, true);
  numerics::set_frozen(trainable, false);
}

void FullModel::save(numerics::Checkpoint& ckpt) const {
  auto& self = const_cast<FullModel&>(*this);
  ckpt.seed = cfg.seed;
  ckpt.config_hash = cfg.hash();
  ckpt.meta["config"] = cfg.to_json();
  vq.save(ckpt);
  if (!units.empty()) ckpt.put("ot.units", units);
  ckpt.put_params("", self.phase_a_parameters());
  if (reasoner) {
    reasoner->base.save(ckpt);
    reasoner->save_adapters(ckpt);
  }
}

FullModel FullModel::load(const numerics::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("config")) throw std::runtime_error("checkpoint is not a full model (no config)");
  PipelineConfig cfg = PipelineConfig::from_json(ckpt.meta["config"]);
  if (cfg.hash() != ckpt.config_hash) throw std::runtime_error("checkpoint config hash mismatch");
  vqvae::VqvaeModel vq;
  vq.load(ckpt);
  Tensor units = ckpt.has("ot.units") ? ckpt.get("ot.units") : Tensor();
  std::optional<reasoner::ToyTransformer> base;
  if (cfg.reasoner.variant != ReasonerVariant::kNone) base = reasoner::ToyTransformer::load(ckpt);
  FullModel m(cfg, std::move(vq), std::move(units), std::move(base));
  ckpt.get_params("", m.phase_a_parameters());
  if (m.reasoner) m.reasoner->load_adapters(ckpt);
  return m;
}

void audit_frozen(const ParameterList& all, const ParameterList& trainable) {
  for (const auto* p : all) {
    bool listed = false;
    for (const auto* t : trainable) listed = listed || t == p;
    if (listed) continue;
    for (double v : p->grad.values())
      if (v != 0.0) throw std::logic_error("frozen parameter " + p->name + " received a gradient");
  }
}

numerics::Checkpoint training_checkpoint(const FullModel& model, const numerics::AdamW* opt, std::size_t iteration,
                                         char phase) {
  numerics::Checkpoint ckpt;
  model.save(ckpt);
  ckpt.meta["train.iteration"] = iteration;
  ckpt.meta["train.phase"] = std::string(1, phase);
  if (opt) {
    ckpt.meta["opt.steps"] = opt->steps();
    for (std::size_t i = 0; i < opt->first_moments().size(); ++i) {
      ckpt.put("opt.m." + std::to_string(i), opt->first_moments()[i]);
      ckpt.put("opt.v." + std::to_string(i), opt->second_moments()[i]);
    }
  }
  return ckpt;
}

void train_stage2(FullModel& model, const std::vector<scene::AnnotatedVideo>& train, const Stage2Options& opts,
                  Stage2Log* log) {
  const PipelineConfig& cfg = model.cfg;
  if (train.empty()) throw std::invalid_argument("train_stage2: empty training set");
  std::vector<VideoInputs> inputs;
  inputs.reserve(train.size());
  for (const auto& v : train) inputs.push_back(model.prepare(v));
  const std::size_t n = inputs.size();
  const std::size_t total_a = cfg.train.phase_a_iters, total = total_a + cfg.train.phase_b_iters;
  auto phase_of = [&](std::size_t i) { return i < total_a ? 'A' : 'B'; };

  Stage2Log local;
  std::size_t it = 0;
  std::unique_ptr<numerics::AdamW> opt;
  ParameterList trainable;
  char opt_phase = 0;
  bool audit_due = false;
  auto start_phase = [&](char ph) {
    trainable = ph == 'A' ? model.phase_a_parameters() : model.phase_b_parameters();
    model.set_trainable(trainable);
    const double lr = ph == 'A' ? cfg.train.lr_a : cfg.train.lr_b;
    opt = std::make_unique<numerics::AdamW>(trainable,
                                            numerics::AdamWConfig{lr, 0.9, 0.999, 1e-8, cfg.train.weight_decay});
    opt_phase = ph;
    audit_due = true;
  };
  if (opts.resume) {
    it = opts.resume->meta.at("train.iteration").get<std::size_t>();
    if (it < total) {
      start_phase(phase_of(it));
      if (opts.resume->meta.value("train.phase", std::string()) == std::string(1, opt_phase) &&
          opts.resume->meta.contains("opt.steps")) {
        std::vector<Tensor> m, v;
        for (std::size_t i = 0; i < trainable.size(); ++i) {
          m.push_back(opts.resume->get("opt.m." + std::to_string(i)));
          v.push_back(opts.resume->get("opt.v." + std::to_string(i)));
        }
        opt->restore(opts.resume->meta["opt.steps"].get<std::int64_t>(), std::move(m), std::move(v));
      }
    }
  }

  std::size_t cached_epoch = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> order;
  double window = 0.0;
  std::size_t window_count = 0;
  const ParameterList all = model.all_parameters();
  for (; it < total && it < opts.stop_after; ++it) {
    const char ph = phase_of(it);
    if (ph != opt_phase) start_phase(ph);
    const std::size_t epoch = it / n;
    if (epoch != cached_epoch) {
      Rng shuffle(numerics::derive_seed(cfg.seed, 5000 + epoch));
      order = shuffle.permutation(n);
      cached_epoch = epoch;
    }
    opt->zero_grad();
    auto diverged = [&](const std::string& what) {
      std::string where;
      if (!opts.checkpoint_path.empty()) {
        auto path = opts.checkpoint_path;
        path += ".last_good";
        numerics::save_checkpoint(path, training_checkpoint(model, opt.get(), it, ph));
        where = "; last good checkpoint at " + path.string();
      }
      return std::runtime_error("stage 2: " + what + " at iteration " + std::to_string(it) + where);
    };
    Graph g;
    double value = 0.0;
    try {
      Var loss = model.loss(g, inputs[order[it % n]]);
      value = loss.value().item();
      if (std::isfinite(value)) g.backward(loss);
    } catch (const std::domain_error& e) {
      // Ops refuse to produce non-finite values; same outcome as a bad loss.
      throw diverged(e.what());
    }
    if (!std::isfinite(value)) throw diverged("non-finite loss");
    if (audit_due || opts.audit_every_step) {
      audit_frozen(all, trainable);
      ++local.audits;
      audit_due = false;
    }
    opt->step();
    local.losses.push_back(value);
    window += value;
    ++window_count;
    if ((it + 1) % cfg.train.log_every == 0) {
      local.rows.push_back({it + 1, ph, window / double(window_count)});
      if (opts.log) {
        opts.log("stage2 phase " + std::string(1, ph) + " iter " + std::to_string(it + 1) + " loss " +
                 std::to_string(window / double(window_count)));
      }
      window = 0.0;
      window_count = 0;
    }
    if (!opts.checkpoint_path.empty() && cfg.train.checkpoint_every > 0 &&
        (it + 1) % cfg.train.checkpoint_every == 0) {
      numerics::save_checkpoint(opts.checkpoint_path, training_checkpoint(model, opt.get(), it + 1, ph));
    }
  }
  local.end_iteration = it;
  if (log) *log = std::move(local);
}

scene::SceneGraphPrediction infer(FullModel& model, const scene::AnnotatedVideo& video, scene::Task task,
                                  scene::Constraint constraint) {
  return scene::apply_constraint(model.predict(video, task), constraint);
}

evalkit::MetricTable evaluate_model(FullModel& model, const std::vector<scene::AnnotatedVideo>& data,
                                    const std::vector<scene::Task>& tasks, const std::vector<std::size_t>& ks,
                                    const std::vector<scene::Constraint>& constraints) {
  return evalkit::evaluate(
      data, [&](const scene::AnnotatedVideo& v, scene::Task task) { return model.predict(v, task); }, tasks, ks,
      constraints);
}

}  // namespace dsgg::pipeline
