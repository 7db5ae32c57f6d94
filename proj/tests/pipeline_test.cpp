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

#include <cmath>
#include <filesystem>
#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "dsgg/pipeline/gradsuite.hpp"
#include "dsgg/pipeline/recipe.hpp"

namespace dsgg::pipeline {
namespace {

PipelineConfig tiny(const std::vector<std::string>& overrides = {}) {
  nlohmann::json j = {{"data", {{"n_videos", 6}, {"frames_per_video", 4}, {"test_videos", 3}}},
                      {"vqvae", {{"iterations", 150}, {"codebook", 16}, {"hidden", 32}}},
                      {"ot", {{"delta_s", 4}}},
                      {"reasoner", {{"variant", "small"}, {"pretrain_steps", 10}, {"pretrain_videos", 8}}},
                      {"train",
                       {{"phase_a_iters", 12}, {"phase_b_iters", 12}, {"lr_a", 1e-3}, {"log_every", 4},
                        {"checkpoint_every", 0}}}};
  for (const auto& o : overrides) apply_override(j, o);
  return PipelineConfig::from_json(j);
}

// Stage 1 and the base are shared by every test that uses the tiny config.
struct Fixture {
  PipelineConfig cfg = tiny();
  Datasets data = make_datasets(cfg);
  SharedStages shared{train_quantizer(cfg, data.train), pretrain(cfg)};
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

FullModel make_model(const PipelineConfig& cfg) {
  auto& f = fixture();
  std::optional<reasoner::ToyTransformer> base;
  if (cfg.reasoner.variant != ReasonerVariant::kNone) base = f.shared.base;
  return FullModel(cfg, f.shared.vq, build_vocab(cfg, f.shared.vq).codebook.units, std::move(base));
}

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dsgg_pipeline_test_" + name);
}

TEST(PipelineConfig, JsonRoundTripKeepsHash) {
  PipelineConfig c = tiny({"ablation.ot=\"kmeans\"", "eval.ks=[5,10]", "seed=99"});
  PipelineConfig back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.ablation.ot, OtMode::kKmeans);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(c.hash().size(), 16u);
  EXPECT_NE(c.hash(), tiny().hash());
}

TEST(PipelineConfig, DefaultsMatchDeskSchedule) {
  PipelineConfig c;
  EXPECT_EQ(c.data.n_videos, 200u);
  EXPECT_EQ(c.data.frames_per_video, 8u);
  EXPECT_DOUBLE_EQ(c.data.noise, 0.05);
  EXPECT_EQ(c.vqvae.iterations, 20000u);
  EXPECT_EQ(c.train.phase_a_iters, 3000u);
  EXPECT_EQ(c.train.phase_b_iters, 5000u);
  EXPECT_DOUBLE_EQ(c.train.lr_a, 1e-5);
  EXPECT_EQ(c.eval_ks, (std::vector<std::size_t>{10, 20, 50}));
}

TEST(PipelineConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(PipelineConfig::from_json({{"trian", {{"lr_a", 1}}}}), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_json({{"train", {{"lr_x", 1}}}}), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_json({{"ablation", {{"ot", "maybe"}}}}), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_json({{"train", {{"lr_a", "fast"}}}}), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_json({{"reasoner", {{"variant", "huge"}}}}), std::invalid_argument);
}

TEST(PipelineConfig, OverrideParsesJsonOrString) {
  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "train.lr_b=0.5");
  apply_override(j, "ablation.ot=off");
  apply_override(j, "ablation.discretize=false");
  EXPECT_DOUBLE_EQ(j["train"]["lr_b"].get<double>(), 0.5);
  EXPECT_EQ(j["ablation"]["ot"], "off");
  EXPECT_EQ(j["ablation"]["discretize"], false);
  EXPECT_THROW(apply_override(j, "no_equals_sign"), std::invalid_argument);
}

TEST(PipelineConfig, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Stage2, AuditFlagsGradientOnFrozenParameter) {
  numerics::Parameter a("a", Tensor({1, 2})), b("b", Tensor({1, 2}));
  a.grad = Tensor({1, 2});
  b.grad = Tensor({1, 2});
  EXPECT_NO_THROW(audit_frozen({&a, &b}, {&a}));
  b.grad(0, 1) = 1e-300;
  EXPECT_THROW(audit_frozen({&a, &b}, {&a}), std::logic_error);
  EXPECT_NO_THROW(audit_frozen({&a, &b}, {&a, &b}));
}

TEST(Stage2, FrozenSetsGetNoGradientInEitherPhase) {
  FullModel m = make_model(fixture().cfg);
  Stage2Options opts;
  opts.audit_every_step = true;
  Stage2Log log;
  train_stage2(m, fixture().data.train, opts, &log);
  EXPECT_EQ(log.audits, 24u);
  EXPECT_EQ(log.end_iteration, 24u);
  // The base itself stays frozen under LoRA and its weights are untouched.
  const auto& base = *fixture().shared.base;
  auto trained = m.reasoner->base.parameters();
  auto original = const_cast<reasoner::ToyTransformer&>(base).parameters();
  ASSERT_EQ(trained.size(), original.size());
  for (std::size_t i = 0; i < trained.size(); ++i)
    EXPECT_TRUE(same(trained[i]->value, original[i]->value)) << trained[i]->name;
  // Phase B moved the LoRA B matrices away from zero.
  double norm = 0.0;
  for (auto* p : m.reasoner->adapter_parameters())
    if (p->name.find(".b") != std::string::npos && p->name.rfind("lora.b", 0) == 0) {
      for (double v : p->value.values()) norm += v * v;
    }
  EXPECT_GT(norm, 0.0);
}

TEST(Stage2, PhaseSetsFollowUnfreezingSchedule) {
  FullModel m = make_model(fixture().cfg);
  auto a = m.phase_a_parameters();
  auto b = m.phase_b_parameters();
  auto names = [](const ParameterList& l) {
    std::set<std::string> s;
    for (auto* p : l) s.insert(p->name);
    return s;
  };
  auto na = names(a), nb = names(b);
  for (const auto& n : na) {
    EXPECT_TRUE(nb.count(n)) << n;
    EXPECT_NE(n.rfind("rs.", 0), 0u) << n;
    EXPECT_NE(n.rfind("lora.", 0), 0u) << n;
    EXPECT_NE(n.rfind("vq.", 0), 0u) << n;
  }
  EXPECT_TRUE(na.count("sig.in.weight"));
  EXPECT_TRUE(nb.count("lora.prefix"));
  for (const auto& n : nb) {
    EXPECT_NE(n.rfind("rs.", 0), 0u) << n;
    EXPECT_NE(n.rfind("vq.", 0), 0u) << n;
  }

  FullModel full_ft = make_model(tiny({"ablation.lora=false"}));
  auto nf = names(full_ft.phase_b_parameters());
  EXPECT_TRUE(nf.count("rs.head.weight"));
  EXPECT_FALSE(nf.count("lora.prefix"));
}

TEST(Stage2, PhaseALossDecreases) {
  PipelineConfig cfg = tiny({"train.phase_a_iters=120", "train.phase_b_iters=0", "train.log_every=20"});
  FullModel m = make_model(cfg);
  Stage2Log log;
  train_stage2(m, fixture().data.train, {}, &log);
  ASSERT_EQ(log.losses.size(), 120u);
  ASSERT_EQ(log.rows.size(), 6u);
  EXPECT_LT(log.rows.back().loss, 0.5 * log.rows.front().loss);
  for (const auto& r : log.rows) EXPECT_EQ(r.phase, 'A');
}

TEST(Stage2, ResumeReproducesLosses) {
  const PipelineConfig cfg = tiny({"train.checkpoint_every=9"});
  FullModel straight = make_model(cfg);
  Stage2Log full_log;
  train_stage2(straight, fixture().data.train, {}, &full_log);

  // Stop inside phase A and again inside phase B.
  for (std::size_t stop : {9u, 18u}) {
    const auto path = temp_path("resume.ckpt");
    FullModel first = make_model(cfg);
    Stage2Options o1;
    o1.checkpoint_path = path;
    o1.stop_after = stop;
    train_stage2(first, fixture().data.train, o1);

    const auto ckpt = numerics::load_checkpoint(path);
    EXPECT_EQ(ckpt.meta["train.iteration"].get<std::size_t>(), stop);
    FullModel resumed = FullModel::load(ckpt);
    Stage2Options o2;
    o2.resume = &ckpt;
    Stage2Log tail;
    train_stage2(resumed, fixture().data.train, o2, &tail);
    ASSERT_EQ(tail.losses.size(), full_log.losses.size() - stop);
    for (std::size_t i = 0; i < tail.losses.size(); ++i)
      EXPECT_EQ(tail.losses[i], full_log.losses[stop + i]) << "stop " << stop << " iteration " << stop + i;
    std::filesystem::remove(path);
  }
}

TEST(Stage2, NonFiniteLossAbortsWithLastGoodCheckpoint) {
  // One Adam step of this size pushes every trainable weight to ~1e300.
  FullModel m = make_model(tiny({"train.lr_a=1e300"}));
  const auto path = temp_path("nan.ckpt");
  const auto last_good = temp_path("nan.ckpt.last_good");
  std::filesystem::remove(last_good);
  Stage2Options opts;
  opts.checkpoint_path = path;
  EXPECT_THROW(train_stage2(m, fixture().data.train, opts), std::runtime_error);
  EXPECT_TRUE(std::filesystem::exists(last_good));
  std::filesystem::remove(last_good);
}

TEST(Stage2, CheckpointRoundTripPredictsIdentically) {
  FullModel m = make_model(fixture().cfg);
  train_stage2(m, fixture().data.train, {});
  numerics::Checkpoint ckpt;
  m.save(ckpt);
  const auto bytes = numerics::serialize_checkpoint(ckpt);
  FullModel back = FullModel::load(numerics::deserialize_checkpoint(bytes));
  const auto& video = fixture().data.test[0];
  for (auto task : {scene::Task::kPredCls, scene::Task::kSgCls}) {
    auto a = m.predict(video, task), b = back.predict(video, task);
    ASSERT_EQ(a.frames.size(), b.frames.size());
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
      EXPECT_EQ(a.frames[t].triplets, b.frames[t].triplets);
      EXPECT_EQ(a.frames[t].class_probs, b.frames[t].class_probs);
    }
  }
  numerics::Checkpoint other;
  m.save(other);
  other.config_hash = "0000000000000000";
  EXPECT_THROW(FullModel::load(other), std::runtime_error);
}

TEST(Inference, ShapesAcrossObjectAndFrameCounts) {
  FullModel m = make_model(fixture().cfg);
  const auto vocab = scene::Vocabulary::desk_default();
  const std::size_t P = vocab.num_predicates();
  for (std::size_t n = 2; n <= 8; ++n) {
    synthgen::SynthConfig sc = fixture().cfg.data;
    sc.n_videos = 1;
    sc.objects_per_frame = n;
    sc.frames_per_video = 16;
    const auto video16 = synthgen::generate(1000 + n, sc, vocab)[0];
    for (std::size_t T : {1u, 2u, 5u, 16u}) {
      scene::AnnotatedVideo v = video16;
      v.frames.resize(T);
      auto no = infer(m, v, scene::Task::kSgCls, scene::Constraint::kNo);
      auto with = infer(m, v, scene::Task::kSgCls, scene::Constraint::kWith);
      ASSERT_EQ(no.frames.size(), T);
      ASSERT_EQ(with.frames.size(), T);
      for (std::size_t t = 0; t < T; ++t) {
        EXPECT_EQ(no.frames[t].triplets.size(), (n - 1) * P);
        EXPECT_EQ(with.frames[t].triplets.size(), n - 1);
        EXPECT_EQ(no.frames[t].class_probs.size(), n);
        for (const auto& tr : with.frames[t].triplets) {
          EXPECT_NE(std::find(no.frames[t].triplets.begin(), no.frames[t].triplets.end(), tr),
                    no.frames[t].triplets.end());
          EXPECT_TRUE(std::isfinite(tr.confidence));
          EXPECT_GE(tr.confidence, 0.0);
          EXPECT_LE(tr.confidence, 1.0);
        }
      }
    }
  }
}

TEST(Inference, RejectsMalformedVideos) {
  FullModel m = make_model(fixture().cfg);
  scene::AnnotatedVideo v = fixture().data.test[0];
  v.frames[0].detections.resize(1);  // person only
  EXPECT_THROW(infer(m, v, scene::Task::kPredCls, scene::Constraint::kWith), std::invalid_argument);
  v = fixture().data.test[0];
  v.frames[1].detections[2].feature.pop_back();
  EXPECT_THROW(infer(m, v, scene::Task::kPredCls, scene::Constraint::kWith), std::invalid_argument);
  v = fixture().data.test[0];
  v.frames.clear();
  EXPECT_THROW(infer(m, v, scene::Task::kPredCls, scene::Constraint::kWith), std::invalid_argument);
}

TEST(Ablations, EveryFlagTrainsAndPredicts) {
  const std::vector<std::vector<std::string>> variants = {
      {},
      {"ablation.ot=off"},
      {"ablation.ot=temporal_conv"},
      {"ablation.ot=kmeans"},
      {"reasoner.variant=none"},
      {"ablation.discretize=false"},
      {"ablation.lora=false"},
      {"ablation.ot=off", "reasoner.variant=none", "ablation.discretize=false"},
      {"ablation.ot=temporal_conv", "ablation.lora=false", "ablation.discretize=false"},
  };
  for (const auto& ov : variants) {
    std::string label;
    for (const auto& o : ov) label += o + " ";
    PipelineConfig cfg = tiny(ov);
    FullModel m = make_model(cfg);
    Stage2Options opts;
    opts.audit_every_step = true;
    Stage2Log log;
    ASSERT_NO_THROW(train_stage2(m, fixture().data.train, opts, &log)) << label;
    for (double l : log.losses) EXPECT_TRUE(std::isfinite(l)) << label;
    auto table = evaluate_model(m, fixture().data.test, {scene::Task::kPredCls}, {10},
                                {scene::Constraint::kWith, scene::Constraint::kNo});
    const double with = table.at(scene::Task::kPredCls, scene::Constraint::kWith, 10);
    const double no = table.at(scene::Task::kPredCls, scene::Constraint::kNo, 10);
    EXPECT_GE(no, with) << label;
  }
}

TEST(Ablations, FullFineTuneMovesTheBase) {
  FullModel m = make_model(tiny({"ablation.lora=false"}));
  train_stage2(m, fixture().data.train, {});
  auto trained = m.reasoner->base.parameters();
  auto original = const_cast<reasoner::ToyTransformer&>(*fixture().shared.base).parameters();
  bool moved = false;
  for (std::size_t i = 0; i < trained.size(); ++i) moved = moved || !same(trained[i]->value, original[i]->value);
  EXPECT_TRUE(moved);
}

TEST(Ablations, NoDiscretizationFeedsLatents) {
  auto& f = fixture();
  FullModel disc = make_model(f.cfg);
  FullModel cont = make_model(tiny({"ablation.discretize=false"}));
  const auto in_d = disc.prepare(f.data.test[0]);
  const auto in_c = cont.prepare(f.data.test[0]);
  const Tensor& code = f.shared.vq.codebook.value;
  for (std::size_t t = 0; t < in_d.features.size(); ++t) {
    for (std::size_t i = 0; i < in_d.features[t].rows(); ++i) {
      // Discretized rows are codebook rows; continuous rows quantize to them.
      const auto q = vqvae::quantize(in_c.features[t].row_span(i), code);
      auto row = code.row_span(q.index);
      EXPECT_TRUE(std::equal(row.begin(), row.end(), in_d.features[t].row_span(i).begin()));
      EXPECT_GT(q.distance, 0.0);
    }
  }
}

TEST(Recipe, DeterministicMetricsJson) {
  auto& f = fixture();
  auto a = run_recipe(f.cfg, f.data, &f.shared);
  auto b = run_recipe(f.cfg, f.data, &f.shared);
  EXPECT_EQ(a.metrics.to_json().dump(), b.metrics.to_json().dump());
  EXPECT_EQ(a.metrics.to_csv(), b.metrics.to_csv());
  EXPECT_EQ(a.log.losses, b.log.losses);
}

TEST(Recipe, VocabularyFollowsOtMode) {
  auto& f = fixture();
  auto on = build_vocab(f.cfg, f.shared.vq);
  auto km = build_vocab(tiny({"ablation.ot=kmeans"}), f.shared.vq);
  auto off = build_vocab(tiny({"ablation.ot=off"}), f.shared.vq);
  EXPECT_GT(on.codebook.size(), 0u);
  EXPECT_EQ(on.codebook.size() % 4, 0u);
  EXPECT_EQ(km.codebook.size(), on.codebook.size());
  EXPECT_EQ(off.codebook.size(), 0u);
  const std::string csv = sweep_csv(on.sweep);
  EXPECT_EQ(csv.rfind("k,size,H,dH\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), std::ptrdiff_t(on.sweep.rows.size() + 1));
}

TEST(Recipe, DatasetsUseSeparateSeeds) {
  auto& f = fixture();
  EXPECT_EQ(f.data.train.size(), 6u);
  EXPECT_EQ(f.data.test.size(), 3u);
  EXPECT_NE(f.data.train[0], f.data.test[0]);
  auto again = make_datasets(f.cfg);
  EXPECT_EQ(again.train, f.data.train);
  EXPECT_EQ(again.test, f.data.test);
}

TEST(GradientSuite, EveryCasePasses) {
  std::set<std::string> names;
  auto r = run_gradient_suite(4, [&](const GradCase& c) {
    names.insert(c.name);
    EXPECT_TRUE(c.report.passed) << c.name << " seed " << c.seed << " worst " << c.report.worst_rel_error << " at "
                                 << c.report.worst_param;
  });
  EXPECT_TRUE(r.passed);
  EXPECT_GE(r.cases.size(), 100u);
  EXPECT_TRUE(names.count("op/gru-cell"));
  EXPECT_TRUE(names.count("chain/full"));
}

}  // namespace
}  // namespace dsgg::pipeline
