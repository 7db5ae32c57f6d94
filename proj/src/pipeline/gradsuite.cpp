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

#include "dsgg/pipeline/gradsuite.hpp"

#include <chrono>

#include "dsgg/numerics/layers.hpp"
#include "dsgg/pipeline/model.hpp"
#include "dsgg/synthgen/synthgen.hpp"

namespace dsgg::pipeline {

namespace {

using numerics::check_gradients;
using numerics::GradCheckOptions;
using numerics::OpKind;
using numerics::Parameter;
using numerics::Rng;

// Builds a scalar loss from parameters; the rng is re-seeded identically on
// every rebuild so random constants stay fixed.
using Build = std::function<Var(Graph&, std::vector<Parameter>&, Rng&)>;
using Init = std::function<void(std::vector<Parameter>&, Rng&)>;

struct OpCase {
  const char* name;
  Init init;
  Build build;
};

Tensor mat(Rng& r, std::size_t a, std::size_t b, double s = 1.0) { return r.normal_tensor({a, b}, s); }

Var contract(Graph& g, Var out, std::uint64_t seed) {
  Rng wr(seed);
  return numerics::sum(numerics::mul(out, g.constant(wr.normal_tensor(out.value().shape(), 1.0))));
}

Var unary(OpKind kind, Var a) {
  Var in[1] = {a};
  return numerics::forward_op(kind, in);
}

std::vector<OpCase> op_cases() {
  using namespace numerics;
  auto p0 = [](Graph& g, std::vector<Parameter>& p) { return g.param(p[0]); };
  return {
      {"op/matmul", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 4, 2)}}; },
       [](Graph& g, auto& p, Rng&) { return matmul(g.param(p[0]), g.param(p[1])); }},
      {"op/add", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 3, 4)}}; },
       [](Graph& g, auto& p, Rng&) { return add(g.param(p[0]), g.param(p[1])); }},
      {"op/add-row", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 1, 4)}}; },
       [](Graph& g, auto& p, Rng&) { return add(g.param(p[0]), g.param(p[1])); }},
      {"op/sub-scalar", [](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}, {"b", mat(r, 1, 1)}}; },
       [](Graph& g, auto& p, Rng&) { return sub(g.param(p[0]), g.param(p[1])); }},
      {"op/mul", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 2)}, {"b", mat(r, 3, 2)}}; },
       [](Graph& g, auto& p, Rng&) { return mul(g.param(p[0]), g.param(p[1])); }},
      {"op/mul-row", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}, {"b", mat(r, 1, 4)}}; },
       [](Graph& g, auto& p, Rng&) { return mul(g.param(p[0]), g.param(p[1])); }},
      {"op/scale", [](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}}; },
       [p0](Graph& g, auto& p, Rng&) { return scale(p0(g, p), -1.7); }},
      {"op/concat-cols", [](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}, {"b", mat(r, 2, 2)}}; },
       [](Graph& g, auto& p, Rng&) {
         Var parts[2] = {g.param(p[0]), g.param(p[1])};
         return concat_cols(parts);
       }},
      {"op/concat-rows", [](auto& p, Rng& r) { p = {{"a", mat(r, 2, 3)}, {"b", mat(r, 1, 3)}}; },
       [](Graph& g, auto& p, Rng&) {
         Var parts[2] = {g.param(p[0]), g.param(p[1])};
         return concat_rows(parts);
       }},
      {"op/slice", [](auto& p, Rng& r) { p = {{"a", mat(r, 4, 5)}}; },
       [p0](Graph& g, auto& p, Rng&) { return slice_rows(slice_cols(p0(g, p), 1, 3), 1, 2); }},
      {"op/transpose", [](auto& p, Rng& r) { p = {{"a", mat(r, 2, 5)}}; },
       [p0](Graph& g, auto& p, Rng&) { return transpose(p0(g, p)); }},
      {"op/relu",
       [](auto& p, Rng& r) {
         Tensor t = mat(r, 3, 3);
         for (auto& v : t.values()) v += v > 0 ? 0.1 : -0.1;  // away from the kink
         p = {{"a", t}};
       },
       [p0](Graph& g, auto& p, Rng&) { return unary(OpKind::kRelu, p0(g, p)); }},
      {"op/gelu", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 3, 2.0)}}; },
       [p0](Graph& g, auto& p, Rng&) { return unary(OpKind::kGelu, p0(g, p)); }},
      {"op/sigmoid", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 3, 2.0)}}; },
       [p0](Graph& g, auto& p, Rng&) { return unary(OpKind::kSigmoid, p0(g, p)); }},
      {"op/tanh", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 3)}}; },
       [p0](Graph& g, auto& p, Rng&) { return unary(OpKind::kTanh, p0(g, p)); }},
      {"op/softmax", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}}; },
       [p0](Graph& g, auto& p, Rng&) { return softmax_rows(p0(g, p)); }},
      {"op/layer-norm", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 5)}}; },
       [p0](Graph& g, auto& p, Rng&) { return layer_norm_rows(p0(g, p)); }},
      {"op/embedding", [](auto& p, Rng& r) { p = {{"t", mat(r, 5, 3)}}; },
       [p0](Graph& g, auto& p, Rng&) {
         const std::size_t idx[] = {4, 0, 4, 2};
         return embedding(p0(g, p), idx);
       }},
      {"op/mean", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}}; },
       [p0](Graph& g, auto& p, Rng&) { return mul(p0(g, p), mean(p0(g, p))); }},
      {"op/sum", [](auto& p, Rng& r) { p = {{"a", mat(r, 3, 4)}}; },
       [p0](Graph& g, auto& p, Rng&) { return mul(p0(g, p), sum(p0(g, p))); }},
      {"op/mean-rows", [](auto& p, Rng& r) { p = {{"a", mat(r, 4, 3)}}; },
       [p0](Graph& g, auto& p, Rng&) { return mean_rows(p0(g, p)); }},
      {"op/cross-entropy", [](auto& p, Rng& r) { p = {{"z", mat(r, 3, 4)}}; },
       [p0](Graph& g, auto& p, Rng& r) {
         std::vector<std::size_t> t{r.below(4), r.below(4), r.below(4)};
         return cross_entropy(p0(g, p), t);
       }},
      {"op/binary-cross-entropy", [](auto& p, Rng& r) { p = {{"z", mat(r, 3, 4, 2.0)}}; },
       [p0](Graph& g, auto& p, Rng& r) {
         Tensor y({3, 4});
         for (auto& v : y.values()) v = r.uniform() < 0.5 ? 0.0 : 1.0;
         return binary_cross_entropy(p0(g, p), y);
       }},
      {"op/gru-cell",
       [](auto& p, Rng& r) {
         p = {{"x", mat(r, 2, 3)}, {"h", mat(r, 2, 4)}};
         const char* names[] = {"wz", "uz", "bz", "wr", "ur", "br", "wn", "un", "bn"};
         for (int k = 0; k < 9; ++k) p.emplace_back(names[k], mat(r, k % 3 == 0 ? 3 : (k % 3 == 1 ? 4 : 1), 4, 0.5));
       },
       [](Graph& g, auto& p, Rng&) {
         std::vector<Var> in;
         for (auto& q : p) in.push_back(g.param(q));
         return numerics::forward_op(OpKind::kGruCell, in);
       }},
  };
}

// Finite differences move both branches of a * sg(a), so stop_gradient is
// checked against its analytic form instead: d/da sum(w * a * sg(a)) = w * a.
void check_stop_gradient(std::uint64_t seed, numerics::GradCheckReport& rep) {
  Rng rng(seed);
  Parameter a("a", mat(rng, 2, 3));
  Tensor w = mat(rng, 2, 3);
  Graph g;
  Var x = g.param(a);
  a.zero_grad();
  g.backward(numerics::sum(numerics::mul(numerics::mul(x, numerics::stop_gradient(x)), g.constant(w))));
  rep = {};
  for (std::size_t i = 0; i < a.value.size(); ++i) {
    const double want = w[i] * a.value[i];
    const double err = std::abs(a.grad[i] - want) / std::max({std::abs(want), std::abs(a.grad[i]), 1e-6});
    ++rep.coords_checked;
    if (err > rep.worst_rel_error) {
      rep.worst_rel_error = err;
      rep.worst_param = "a";
      rep.worst_index = i;
      rep.worst_analytic = a.grad[i];
      rep.worst_numeric = want;
    }
  }
  rep.passed = rep.worst_rel_error <= 1e-12;
}

struct Composite {
  const char* name;
  std::function<numerics::GradCheckReport(std::uint64_t seed)> run;
};

const scene::Vocabulary& vocab() {
  static const scene::Vocabulary v = scene::Vocabulary::desk_default();
  return v;
}

PipelineConfig chain_config(std::uint64_t seed, OtMode ot, ReasonerVariant variant) {
  PipelineConfig c;
  c.seed = seed;
  c.data.d_feat = 6;
  c.data.frames_per_video = 3;
  c.data.objects_per_frame = 3;
  c.vqvae.d_feat = 6;
  c.vqvae.hidden = 8;
  c.vqvae.latent = 5;
  c.vqvae.codebook_size = 8;
  c.sia.latent = 5;
  c.sia.pos_hidden = 4;
  c.sia.pos_dim = 3;
  c.ot.signal_hidden = 4;
  c.reasoner.variant = variant;
  c.reasoner.model = {1, 8, 2, 16, 16};
  c.reasoner.prefix = 3;
  c.reasoner.lora = {2, 4.0};
  c.sgg.width = 8;
  c.sgg.heads = 2;
  c.sgg.ffn = 12;
  c.ablation.ot = ot;
  return c;
}

numerics::GradCheckReport full_chain(std::uint64_t seed, OtMode ot, ReasonerVariant variant) {
  const PipelineConfig cfg = chain_config(seed, ot, variant);
  Rng rng(seed);
  vqvae::VqvaeModel vq(cfg.vqvae, rng);
  vq.usage.assign(cfg.vqvae.codebook_size, 1.0);
  Tensor units = mat(rng, 4, cfg.vqvae.latent);
  std::optional<reasoner::ToyTransformer> base;
  if (variant != ReasonerVariant::kNone) base.emplace(cfg.reasoner.model, 16, rng);
  FullModel model(cfg, std::move(vq), units, std::move(base));
  if (model.reasoner) {
    for (auto* ad : {&model.reasoner->lora.query, &model.reasoner->lora.value})
      for (auto& a : *ad) a.b.value = rng.normal_tensor(a.b.value.shape(), 0.5);
  }
  synthgen::SynthConfig sc = cfg.data;
  sc.n_videos = 1;
  const auto video = synthgen::generate(seed + 1, sc, vocab())[0];
  const VideoInputs in = model.prepare(video);
  ParameterList params = model.phase_b_parameters();
  model.set_trainable(params);
  return check_gradients([&](Graph& g) { return model.loss(g, in); }, params, {1e-5, 1e-4, 1e-6, 4, seed});
}

std::vector<Composite> composites() {
  return {
      {"module/linear",
       [](std::uint64_t s) {
         Rng rng(s);
         numerics::Linear lin("lin", 4, 3, rng);
         lin.bias.value = mat(rng, 1, 3);
         Tensor x = mat(rng, 5, 4);
         return check_gradients([&](Graph& g) { return contract(g, lin(g, g.constant(x)), s + 7); },
                                lin.parameters());
       }},
      {"module/mlp",
       [](std::uint64_t s) {
         Rng rng(s);
         numerics::Mlp mlp("mlp", 4, 6, 3, rng);
         Tensor x = mat(rng, 5, 4);
         return check_gradients([&](Graph& g) { return contract(g, mlp(g, g.constant(x)), s + 7); },
                                mlp.parameters());
       }},
      {"module/layer-norm",
       [](std::uint64_t s) {
         Rng rng(s);
         numerics::LayerNorm ln("ln", 5);
         ln.gain.value = mat(rng, 1, 5);
         ln.shift.value = mat(rng, 1, 5);
         Tensor x = mat(rng, 3, 5);
         return check_gradients([&](Graph& g) { return contract(g, ln(g, g.constant(x)), s + 7); },
                                {&ln.gain, &ln.shift});
       }},
      {"module/masked-attention",
       [](std::uint64_t s) {
         Rng rng(s);
         Parameter q("q", mat(rng, 4, 6)), k("k", mat(rng, 4, 6)), v("v", mat(rng, 4, 6));
         const Tensor mask = numerics::causal_mask(4);
         return check_gradients(
             [&](Graph& g) {
               return contract(g, numerics::multi_head_attention(g.param(q), g.param(k), g.param(v), 2, &mask),
                               s + 7);
             },
             {&q, &k, &v});
       }},
      {"loss/vqvae",
       [](std::uint64_t s) {
         Rng rng(s);
         vqvae::VqvaeConfig vc;
         vc.d_feat = 4;
         vc.hidden = 5;
         vc.latent = 3;
         vc.codebook_size = 6;
         vqvae::VqvaeModel model(vc, rng);
         model.lambda = 0.25;
         Tensor x = mat(rng, 3, 4);
         const vqvae::Anchor anchor = vqvae::make_anchor(model, x);
         return check_gradients([&](Graph& g) { return vqvae::vqvae_loss(g, model, x, &anchor).total; },
                                model.parameters());
       }},
      {"module/sia-frame-token",
       [](std::uint64_t s) {
         Rng rng(s);
         sia::Sia sia(sia::SiaConfig{5, 4, 3, -1.0}, rng);
         std::vector<scene::Box> boxes;
         for (int i = 0; i < 4; ++i)
           boxes.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), 0.1, 0.1});
         Tensor f = mat(rng, 4, 5);
         return check_gradients(
             [&](Graph& g) {
               auto r = sia.frame_token(g, g.constant(f), boxes, 640, 480);
               Var both[2] = {numerics::mean_rows(r.augmented), numerics::concat_cols(std::vector<Var>{r.token})};
               return contract(g, numerics::concat_cols(both), s + 7);
             },
             sia.parameters());
       }},
      {"module/signal-soft",
       [](std::uint64_t s) {
         Rng rng(s);
         otvocab::SignalGenerator gen(4, 3, 5, rng);
         Tensor units = mat(rng, 5, 4), tokens = mat(rng, 3, 4);
         return check_gradients(
             [&](Graph& g) {
               return contract(g, gen.generate(g, g.constant(tokens), units, otvocab::SignalMode::kSoft), s + 7);
             },
             gen.parameters());
       }},
      {"module/reasoner",
       [](std::uint64_t s) {
         Rng rng(s);
         reasoner::ToyTransformer base(reasoner::TransformerConfig{1, 8, 2, 16, 16}, 5, rng);
         reasoner::Reasoner r(std::move(base), {{1, 8, 2, 16, 16}, {2, 4.0}, 3, 6}, rng);
         for (auto* ad : {&r.lora.query, &r.lora.value})
           for (auto& a : *ad) a.b.value = rng.normal_tensor(a.b.value.shape(), 0.5);
         Tensor signal = mat(rng, 4, 6);
         auto params = numerics::concat_params({r.adapter_parameters(), r.interface_parameters(), r.base.parameters()});
         return check_gradients([&](Graph& g) { return contract(g, r.reason(g, g.constant(signal)), s + 7); },
                                params, {1e-5, 1e-4, 1e-6, 6, s});
       }},
      {"loss/predictor-sgg",
       [](std::uint64_t s) {
         Rng rng(s);
         synthgen::SynthConfig sc;
         sc.n_videos = 1;
         sc.frames_per_video = 2;
         sc.objects_per_frame = 3;
         sc.d_feat = 4;
         const auto video = synthgen::generate(s + 3, sc, vocab())[0];
         const auto pairs = sggpred::enumerate_pairs(video, vocab());
         sggpred::PredictorConfig pc{10, 6, 8, 2, 12, 4, vocab().num_objects(), vocab().num_predicates()};
         sggpred::SggPredictor model(pc, rng);
         Tensor features = mat(rng, pairs.size(), 10), memory = mat(rng, 2, 6);
         auto targets = sggpred::make_targets(video, pairs, vocab().num_predicates());
         targets.predicates(0, 1) = 1.0;
         return check_gradients(
             [&](Graph& g) {
               auto out = model.forward(g, g.constant(features), pairs, g.constant(memory));
               return sggpred::sgg_loss(out.class_logits, out.predicate_logits, targets, 0.5);
             },
             model.parameters(), {1e-5, 1e-4, 1e-6, 8, s});
       }},
      {"chain/full", [](std::uint64_t s) { return full_chain(s, OtMode::kOn, ReasonerVariant::kBase); }},
      {"chain/temporal-conv",
       [](std::uint64_t s) { return full_chain(s, OtMode::kTemporalConv, ReasonerVariant::kBase); }},
      {"chain/no-reasoner", [](std::uint64_t s) { return full_chain(s, OtMode::kOff, ReasonerVariant::kNone); }},
  };
}

}  // namespace

GradSuiteResult run_gradient_suite(std::size_t seeds, const std::function<void(const GradCase&)>& on_case) {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteResult result;
  auto record = [&](GradCase c) {
    result.passed = result.passed && c.report.passed;
    result.coords += c.report.coords_checked;
    if (on_case) on_case(c);
    result.cases.push_back(std::move(c));
  };
  for (const auto& oc : op_cases()) {
    for (std::uint64_t s = 0; s < seeds; ++s) {
      GradCase c{oc.name, s, {}};
      Rng rng(numerics::derive_seed(s, 99));
      std::vector<Parameter> params;
      oc.init(params, rng);
      const std::uint64_t inner = rng.below(1u << 30);
      ParameterList list;
      for (auto& p : params) list.push_back(&p);
      c.report = check_gradients(
          [&](Graph& g) {
            Rng r(inner);
            return contract(g, oc.build(g, params, r), inner + 1);
          },
          list);
      record(std::move(c));
    }
  }
  for (std::uint64_t s = 0; s < seeds; ++s) {
    GradCase c{"op/stop-gradient", s, {}};
    check_stop_gradient(numerics::derive_seed(s, 77), c.report);
    record(std::move(c));
  }
  for (const auto& comp : composites()) {
    for (std::uint64_t s = 0; s < seeds; ++s) record({comp.name, s, comp.run(numerics::derive_seed(s, 123))});
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace dsgg::pipeline
