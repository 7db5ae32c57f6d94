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

#include <gtest/gtest.h>

#include "dsgg/numerics/gradcheck.hpp"
#include "dsgg/sggpred/sggpred.hpp"

namespace dsgg::sggpred {
namespace {

using numerics::Rng;
using scene::Task;

const scene::Vocabulary& vocab() {
  static const auto v = scene::Vocabulary::desk_default();
  return v;
}

scene::AnnotatedVideo video_with(std::vector<std::vector<std::size_t>> classes) {
  scene::AnnotatedVideo v;
  for (const auto& frame : classes) {
    scene::Frame f;
    for (std::size_t c : frame) f.detections.push_back({c, {}, {}, {}});
    v.frames.push_back(f);
  }
  return v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TEST(Pairs, OnePairPerObject) {
  auto v = video_with({{1, 0, 2, 3}, {0, 4}});
  auto pairs = enumerate_pairs(v, vocab());
  ASSERT_EQ(pairs.size(), 4u);
  EXPECT_EQ(pairs[0], (PairIndex{0, 1, 0}));
  EXPECT_EQ(pairs[1], (PairIndex{0, 1, 2}));
  EXPECT_EQ(pairs[3], (PairIndex{1, 0, 1}));
  EXPECT_THROW(enumerate_pairs(video_with({{1, 2}}), vocab()), std::invalid_argument);
  EXPECT_THROW(enumerate_pairs(video_with({{0}}), vocab()), std::invalid_argument);
}

TEST(Pairs, FeaturesGatherSubjectAndObjectRows) {
  Graph g;
  Tensor f0 = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}), f1 = Tensor::matrix({{7, 8}, {9, 10}});
  std::vector<Var> aug{g.constant(f0), g.constant(f1)};
  std::vector<PairIndex> pairs{{0, 1, 2}, {1, 0, 1}};
  Tensor got = pair_features(g, aug, pairs).value();
  EXPECT_EQ(got, Tensor::matrix({{3, 4, 5, 6}, {7, 8, 9, 10}}));
}

TEST(Decode, SingleObjectYieldsOneTripletPerPredicate) {
  auto v = video_with({{0, 3}});
  auto pairs = enumerate_pairs(v, vocab());
  Rng rng(1);
  Tensor cls = rng.normal_tensor({1, 8}, 1.0), pred = rng.normal_tensor({1, 6}, 1.0);
  auto out = decode(cls, pred, pairs, v, Task::kPredCls, vocab());
  ASSERT_EQ(out.frames[0].triplets.size(), vocab().num_predicates());
  EXPECT_TRUE(out.frames[0].class_probs.empty());
  for (std::size_t k = 1; k < 6; ++k)
    EXPECT_GE(out.frames[0].triplets[k - 1].confidence, out.frames[0].triplets[k].confidence);
  for (const auto& t : out.frames[0].triplets) EXPECT_DOUBLE_EQ(t.confidence, sigmoid(pred(0, t.predicate)));
}

TEST(Decode, SgclsMultipliesArgmaxClassProbability) {
  auto v = video_with({{0, 3, 5}});
  auto pairs = enumerate_pairs(v, vocab());
  Rng rng(2);
  Tensor cls = rng.normal_tensor({2, 8}, 2.0), pred = rng.normal_tensor({2, 6}, 1.0);
  auto out = decode(cls, pred, pairs, v, Task::kSgCls, vocab());
  const auto& f = out.frames[0];
  ASSERT_EQ(f.class_probs.size(), 3u);
  EXPECT_EQ(f.class_probs[0][vocab().person_id()], 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    double z = 0.0, mx = -1e300;
    for (std::size_t c = 0; c < 8; ++c) mx = std::max(mx, cls(i, c));
    for (std::size_t c = 0; c < 8; ++c) z += std::exp(cls(i, c) - mx);
    const double top = 1.0 / z;
    double sum = 0.0;
    for (double p : f.class_probs[i + 1]) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (const auto& t : f.triplets) {
      if (t.object != i + 1) continue;
      EXPECT_NEAR(t.confidence, top * sigmoid(pred(i, t.predicate)), 1e-12);
    }
  }
}

TEST(Decode, TiesBreakByPredicateThenObject) {
  auto v = video_with({{0, 3, 5}});
  auto pairs = enumerate_pairs(v, vocab());
  Tensor cls({2, 8}), pred({2, 6});
  auto out = decode(cls, pred, pairs, v, Task::kPredCls, vocab());
  const auto& t = out.frames[0].triplets;
  ASSERT_EQ(t.size(), 12u);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_EQ(t[k].predicate, k / 2);
    EXPECT_EQ(t[k].object, 1 + k % 2);
  }
}

TEST(Decode, SeveralPredicatesCanBeHighAtOnce) {
  auto v = video_with({{0, 3}});
  auto pairs = enumerate_pairs(v, vocab());
  Tensor pred = Tensor::matrix({{8, -8, 8, -8, 8, -8}});
  auto out = decode(Tensor({1, 8}), pred, pairs, v, Task::kPredCls, vocab());
  int high = 0;
  for (const auto& t : out.frames[0].triplets) {
    EXPECT_GT(t.confidence, 0.0);
    EXPECT_LT(t.confidence, 1.0);
    high += t.confidence > 0.99;
  }
  EXPECT_EQ(high, 3);
}

TEST(Loss, HandBuiltTwoPairExample) {
  Graph g;
  Tensor cls = Tensor::matrix({{1.0, 0.0, -1.0}, {0.5, 0.5, 2.0}});
  Tensor pred = Tensor::matrix({{2.0, -1.0}, {0.0, 3.0}});
  PairTargets t{{0, 2}, Tensor::matrix({{1, 0}, {1, 1}})};
  const double alpha = 0.5;
  Var loss = sgg_loss(g.constant(cls), g.constant(pred), t, alpha);
  // CE: -log softmax at the target, averaged over the 2 pairs.
  const double ce0 = std::log(std::exp(1.0) + 1.0 + std::exp(-1.0)) - 1.0;
  const double ce1 = std::log(2.0 * std::exp(0.5) + std::exp(2.0)) - 2.0;
  // BCE over the 4 entries.
  const double bce = (-std::log(sigmoid(2.0)) - std::log(1.0 - sigmoid(-1.0)) - std::log(sigmoid(0.0)) -
                      std::log(sigmoid(3.0))) / 4.0;
  EXPECT_NEAR(loss.value().item(), alpha * 0.5 * (ce0 + ce1) + bce, 1e-10);

  Graph g2;
  EXPECT_NEAR(sgg_loss(g2.constant(cls), g2.constant(pred), t, 0.0).value().item(), bce, 1e-12);
}

TEST(Loss, PerfectLogitsGiveZero) {
  Graph g;
  Tensor cls({2, 3}, -60.0), pred({2, 2}, -60.0);
  cls(0, 1) = cls(1, 2) = 60.0;
  pred(0, 0) = pred(1, 1) = 60.0;
  PairTargets t{{1, 2}, Tensor::matrix({{1, 0}, {0, 1}})};
  EXPECT_LT(sgg_loss(g.constant(cls), g.constant(pred), t, 0.5).value().item(), 1e-20);
}

struct Fixture {
  scene::AnnotatedVideo video = video_with({{0, 3, 5}, {1, 0, 2, 4}, {0, 7}});
  std::vector<PairIndex> pairs;
  PredictorConfig cfg;
  SggPredictor model;
  Tensor features, memory;

  explicit Fixture(std::uint64_t seed) {
    Rng rng(seed);
    pairs = enumerate_pairs(video, vocab());
    cfg.pair_dim = 10;
    cfg.memory_dim = 6;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.ffn = 12;
    cfg.max_frames = 4;
    model = SggPredictor(cfg, rng);
    features = rng.normal_tensor({pairs.size(), 10}, 1.0);
    memory = rng.normal_tensor({3, 6}, 1.0);
  }
};

TEST(Predictor, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Fixture fx(seed + 10);
    auto targets = make_targets(fx.video, fx.pairs, 6);
    targets.predicates(0, 1) = targets.predicates(3, 4) = 1.0;
    auto rep = numerics::check_gradients(
        [&](Graph& g) {
          auto out = fx.model.forward(g, g.constant(fx.features), fx.pairs, g.constant(fx.memory));
          return sgg_loss(out.class_logits, out.predicate_logits, targets, 0.5);
        },
        fx.model.parameters(), {1e-5, 1e-4, 1e-6, 8, seed});
    EXPECT_TRUE(rep.passed) << rep.worst_param << " " << rep.worst_rel_error;
  }
}

TEST(Predictor, SelfAttentionStaysInsideFrame) {
  Fixture fx(3);
  auto run = [&](const Tensor& feats) {
    Graph g;
    return fx.model.forward(g, g.constant(feats), fx.pairs, g.constant(fx.memory)).predicate_logits.value();
  };
  Tensor base = run(fx.features);
  Tensor moved = fx.features;
  for (std::size_t k = 0; k < 10; ++k) moved(3, k) += 1.0;  // a frame-1 pair
  Tensor out = run(moved);
  for (std::size_t i = 0; i < fx.pairs.size(); ++i) {
    bool same = true;
    for (std::size_t k = 0; k < 6; ++k) same = same && out(i, k) == base(i, k);
    EXPECT_EQ(same, fx.pairs[i].frame != 1) << "pair " << i;
  }
  EXPECT_EQ(run(fx.features), base);
}

TEST(Predictor, RejectsBadShapes) {
  Fixture fx(4);
  Graph g;
  EXPECT_THROW(fx.model.forward(g, g.constant(Tensor({2, 10})), fx.pairs, g.constant(fx.memory)),
               std::invalid_argument);
  EXPECT_THROW(fx.model.forward(g, g.constant(fx.features), fx.pairs, g.constant(Tensor({3, 5}))),
               std::invalid_argument);
}

TEST(Targets, MultiHotFromGroundTruth) {
  auto v = video_with({{0, 3, 5}});
  v.frames[0].gt_triplets = {{0, 2, 1, 1.0}, {0, 4, 2, 1.0}, {0, 1, 2, 1.0}};
  auto pairs = enumerate_pairs(v, vocab());
  auto t = make_targets(v, pairs, 6);
  EXPECT_EQ(t.classes, (std::vector<std::size_t>{3, 5}));
  EXPECT_EQ(t.predicates, Tensor::matrix({{0, 0, 1, 0, 0, 0}, {0, 1, 0, 0, 1, 0}}));
}

}  // namespace
}  // namespace dsgg::sggpred
