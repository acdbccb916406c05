// Copyright 2026 The stilab Authors.
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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stilab/sti.h"
#include "test_util.h"

namespace stilab::sti {
namespace {

using encoders::FrameEmbeddingSet;
using encoders::TextEmbeddingSequence;
using stilab::testing::RandomTensor;

FrameEmbeddingSet RandomFrames(Rng &rng, std::size_t t, std::size_t p,
                               std::size_t d) {
  return encoders::EncodeVideo(RandomTensor(rng, Shape{t, p, d}),
                               Tensor::Identity(d), Tensor(Shape{d}));
}

TextEmbeddingSequence RandomText(Rng &rng, std::size_t nw, std::size_t d) {
  TextEmbeddingSequence text;
  text.word_embeddings = RandomTensor(rng, Shape{nw, d});
  text.class_embedding = RandomTensor(rng, Shape{d});
  for (std::size_t i = 0; i < nw; ++i) text.token_texts.push_back("w" + std::to_string(i));
  return text;
}

STIParameters RandomParams(Rng &rng, std::size_t d, double tau = 0.5) {
  STIParameters p;
  p.w_patch = RandomTensor(rng, Shape{d, d}, 0.5);
  p.w_word = RandomTensor(rng, Shape{d, d}, 0.5);
  p.tau_saliency = tau;
  return p;
}

TEST(Projection, IdentityAndRelu) {
  const Tensor in = Tensor::Matrix(2, 2, {1.0, 2.0, 0.0, 3.5});
  EXPECT_TRUE(ProjectWords(in, Tensor::Identity(2)).BitwiseEquals(in));
  const Tensor out = ProjectWords(Tensor::Matrix(1, 2, {-1.0, 2.0}),
                                  Tensor::Identity(2));
  EXPECT_EQ(out.values(), (std::vector<double>{0.0, 2.0}));
  const Tensor patches(Shape{2, 3, 2}, 0.25);
  EXPECT_TRUE(ProjectPatches(patches, Tensor::Identity(2)).BitwiseEquals(patches));
  EXPECT_STILAB_ERROR(ProjectWords(in, Tensor::Identity(3)),
                      ErrorCode::kShapeMismatch);
}

TEST(Projection, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  grad::ParameterStore p;
  RegisterProjections(p, 4);
  p.Set(kPatchProjection, RandomTensor(rng, Shape{4, 4}));
  p.Set(kWordProjection, RandomTensor(rng, Shape{4, 4}));
  const Tensor patches = RandomTensor(rng, Shape{6, 4});
  const Tensor words = RandomTensor(rng, Shape{3, 4});
  auto loss = [&](grad::Tape &t) {
    grad::Var a = ProjectPatches(t, t.Constant(patches));
    grad::Var b = ProjectWords(t, t.Constant(words));
    return t.Sum(t.MatMulNT(a, b));
  };
  grad::Tape probe(&p);
  loss(probe);
  ASSERT_GT(probe.min_relu_margin(), 1e-4);
  EXPECT_LT(grad::FiniteDifferenceCheck(loss, p).max_relative_error, 1e-5);
}

TEST(Spatial, MaxOverPatchWordPairs) {
  const Tensor patches(Shape{1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  const Tensor words = Tensor::Matrix(2, 2, {2, 0, 0, 3});
  const Tensor frames = Tensor::Matrix(1, 2, {0.5, -1.0});
  const SpatialResult r = SpatialInteraction(patches, words, frames);
  EXPECT_EQ(r.spatial_scores[0], 3.0);
  EXPECT_EQ(r.spatial_features.values(), (std::vector<double>{1.5, -3.0}));
}

TEST(Spatial, EqualDotsGiveThatConstant) {
  const Tensor patches(Shape{2, 2, 1}, 2.0);
  const Tensor words = Tensor::Matrix(3, 1, {1.5, 1.5, 1.5});
  const Tensor frames = Tensor::Matrix(2, 1, {1.5, -4.0});
  const SpatialResult r = SpatialInteraction(patches, words, frames);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(r.spatial_scores[t], 3.0);
    EXPECT_EQ(r.spatial_features.at(t, 0), 3.0 * frames.at(t, 0));
  }
}

TEST(Spatial, MatchesExhaustiveEnumeration) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor patches = ProjectPatches(RandomTensor(rng, Shape{3, 4, 5}),
                                          Tensor::Identity(5));
    const Tensor words = ProjectWords(RandomTensor(rng, Shape{3, 5}),
                                      Tensor::Identity(5));
    const Tensor frames = RandomTensor(rng, Shape{3, 5});
    const SpatialResult r = SpatialInteraction(patches, words, frames);
    for (std::size_t t = 0; t < 3; ++t) {
      double best = -INFINITY;
      for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t l = 0; l < 3; ++l) {
          double dot = 0.0;
          for (std::size_t d = 0; d < 5; ++d) dot += patches.at(t, k, d) * words.at(l, d);
          best = std::max(best, dot);
        }
      }
      EXPECT_EQ(r.spatial_scores[t], best);
      EXPECT_GE(r.spatial_scores[t], 0.0);
    }
  }
}

TEST(Spatial, NoWordsIsAnError) {
  EXPECT_STILAB_ERROR(SpatialInteraction(Tensor(Shape{1, 1, 2}),
                                         Tensor(Shape{0, 2}), Tensor(Shape{1, 2})),
                      ErrorCode::kInvalidArgument);
}

TEST(Saliency, Examples) {
  const Tensor same = Tensor::Matrix(3, 2, {1, 2, 1, 2, 1, 2});
  const Tensor words = Tensor::Matrix(2, 2, {0.3, 0.1, 0.2, 0.9});
  const TemporalSaliency flat = ComputeTemporalSaliency(same, words, 0.07);
  for (double w : flat.weights.data()) {
    EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  }
  EXPECT_EQ(ComputeTemporalSaliency(Tensor::Matrix(1, 2, {4, 5}), words, 0.07)
                .weights[0],
            1.0);
  // One word (1, 0); frame logits 0 and ln 3.
  const Tensor f = Tensor::Matrix(2, 2, {0.0, 7.0, std::log(3.0), 7.0});
  const Tensor w = ComputeTemporalSaliency(f, Tensor::Matrix(1, 2, {1, 0}), 1.0).weights;
  EXPECT_NEAR(w[0], 0.25, 1e-15);
  EXPECT_NEAR(w[1], 0.75, 1e-15);
  EXPECT_STILAB_ERROR(ComputeTemporalSaliency(f, words, 0.0),
                      ErrorCode::kInvalidArgument);
}

TEST(Saliency, LargeTemperatureIsUniform) {
  Rng rng(13);
  const Tensor f = RandomTensor(rng, Shape{6, 4});
  const Tensor words = RandomTensor(rng, Shape{3, 4});
  const TemporalSaliency s = ComputeTemporalSaliency(f, words, 1e6);
  for (double w : s.weights.data()) {
    EXPECT_NEAR(w, 1.0 / 6.0, 1e-6);
  }
}

TEST(Aggregate, UniformOneHotAndNaive) {
  Rng rng(14);
  const FrameEmbeddingSet frames = RandomFrames(rng, 4, 2, 3);
  const Tensor &v = frames.frame_class_embeddings;
  TemporalSaliency uniform{Tensor(Shape{4}, 0.25)};
  EXPECT_LT(MaxAbsDiff(AggregateVideo(v, uniform), MeanPoolBaseline(frames)), 1e-15);
  TemporalSaliency hot{Tensor::Vector({0, 0, 1, 0})};
  const Tensor sel = AggregateVideo(v, hot);
  for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(sel[d], v.at(2, d));
  TemporalSaliency any{Tensor::Vector({0.1, 0.2, 0.3, 0.4})};
  const Tensor got = AggregateVideo(v, any);
  for (std::size_t d = 0; d < 3; ++d) {
    double acc = 0.0;
    for (std::size_t t = 0; t < 4; ++t) acc += v.at(t, d) * any.weights[t];
    EXPECT_EQ(got[d], acc);
  }
  EXPECT_STILAB_ERROR(AggregateVideo(v, TemporalSaliency{Tensor(Shape{3})}),
                      ErrorCode::kShapeMismatch);
}

TEST(MeanPool, Examples) {
  FrameEmbeddingSet one;
  one.frame_class_embeddings = Tensor::Matrix(1, 2, {3, 4});
  one.patch_embeddings = Tensor(Shape{1, 1, 2});
  EXPECT_EQ(MeanPoolBaseline(one).values(), (std::vector<double>{3, 4}));
  FrameEmbeddingSet two;
  two.frame_class_embeddings = Tensor::Matrix(2, 2, {1, 0, 0, 1});
  two.patch_embeddings = Tensor(Shape{2, 1, 2});
  EXPECT_EQ(MeanPoolBaseline(two).values(), (std::vector<double>{0.5, 0.5}));
}

TEST(Forward, BothOffIsTheBaselineBitwise) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const auto frames = RandomFrames(rng, 5, 3, 4);
    const STIOutput out = Forward(frames, RandomText(rng, 3, 4),
                                  RandomParams(rng, 4), {false, false});
    EXPECT_TRUE(out.video_feature.BitwiseEquals(MeanPoolBaseline(frames)));
  }
}

TEST(Forward, TemporalOffWithEqualScoresIsMean) {
  Rng rng(16);
  auto frames = RandomFrames(rng, 3, 2, 2);
  for (double &x : frames.patch_embeddings.data()) x = 1.0;
  frames.frame_class_embeddings = RandomTensor(rng, Shape{3, 2});
  const STIOutput out = Forward(frames, RandomText(rng, 2, 2),
                                STIParameters::Identity(2), {true, false});
  EXPECT_LT(MaxAbsDiff(out.video_feature, MeanPoolBaseline(frames)), 1e-15);
}

// Straight-line recomputation from the four component oracles.
Tensor Oracle(const FrameEmbeddingSet &frames, const TextEmbeddingSequence &text,
              const STIParameters &p) {
  const std::size_t T = frames.num_frames(), P = frames.num_patches(),
                    D = frames.dim(), W = text.num_words();
  auto relu_mul = [&](std::span<const double> x, const Tensor &w) {
    std::vector<double> out(D, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
      for (std::size_t i = 0; i < D; ++i) out[j] += x[i] * w.at(i, j);
      out[j] = std::max(out[j], 0.0);
    }
    return out;
  };
  std::vector<std::vector<double>> words;
  for (std::size_t l = 0; l < W; ++l) words.push_back(relu_mul(text.word_embeddings.row(l), p.w_word));
  std::vector<std::vector<double>> fsp(T, std::vector<double>(D));
  for (std::size_t t = 0; t < T; ++t) {
    double best = -INFINITY;
    for (std::size_t k = 0; k < P; ++k) {
      const auto patch = relu_mul(
          std::span<const double>(frames.patch_embeddings.data()).subspan((t * P + k) * D, D),
          p.w_patch);
      for (const auto &w : words) {
        best = std::max(best, std::inner_product(patch.begin(), patch.end(), w.begin(), 0.0));
      }
    }
    for (std::size_t d = 0; d < D; ++d) fsp[t][d] = best * frames.frame_class_embeddings.at(t, d);
  }
  std::vector<double> s(T, 0.0);
  for (const auto &w : words) {
    std::vector<double> logit(T);
    for (std::size_t t = 0; t < T; ++t) {
      logit[t] = std::inner_product(fsp[t].begin(), fsp[t].end(), w.begin(), 0.0) / p.tau_saliency;
    }
    const double m = *std::max_element(logit.begin(), logit.end());
    double z = 0.0;
    for (double x : logit) z += std::exp(x - m);
    for (std::size_t t = 0; t < T; ++t) s[t] += std::exp(logit[t] - m) / z / W;
  }
  Tensor out(Shape{D});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) out[d] += s[t] * frames.frame_class_embeddings.at(t, d);
  }
  return out;
}

TEST(Forward, MatchesComposedOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto frames = RandomFrames(rng, 4, 3, 5);
    const auto text = RandomText(rng, 3, 5);
    const auto params = RandomParams(rng, 5);
    const STIOutput out = Forward(frames, text, params);
    const Tensor want = Oracle(frames, text, params);
    EXPECT_LT(MaxAbsDiff(out.video_feature, want), 1e-12);
    double sum = 0.0;
    for (double w : out.temporal.weights.data()) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Forward, TapeAgreesWithValueLevel) {
  Rng rng(18);
  const auto text = RandomText(rng, 3, 4);
  const Tensor raw = RandomTensor(rng, Shape{5, 3, 4});
  grad::ParameterStore store;
  encoders::RegisterVideoEncoder(store, 4);
  RegisterProjections(store, 4);
  store.Set(kPatchProjection, RandomTensor(rng, Shape{4, 4}, 0.5));
  store.Set(kWordProjection, RandomTensor(rng, Shape{4, 4}, 0.5));
  const STIParameters params{store.Get(kPatchProjection), store.Get(kWordProjection), 0.3};
  const auto frames = encoders::EncodeVideo(raw, store.Get(encoders::kVideoMix),
                                            store.Get(encoders::kVideoBias));
  for (Toggles tg : {Toggles{true, true}, Toggles{true, false}, Toggles{false, true},
                     Toggles{false, false}}) {
    grad::Tape tape(&store);
    const auto enc = encoders::EncodeVideo(tape, raw);
    const StiNodes nodes =
        Forward(tape, enc.frames, ProjectPatches(tape, enc.patches), enc.num_patches,
                ProjectWords(tape, tape.Constant(text.word_embeddings)),
                StiConfig{0.3, tg});
    const STIOutput want = Forward(frames, text, params, tg);
    EXPECT_LT(MaxAbsDiff(tape.value(nodes.video_feature), want.video_feature), 1e-13);
  }
}

TEST(Forward, FramePermutationInvariance) {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const auto frames = RandomFrames(rng, 5, 3, 4);
    const auto text = RandomText(rng, 3, 4);
    const auto params = RandomParams(rng, 4);
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    FrameEmbeddingSet shuffled = frames;
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t d = 0; d < 4; ++d) {
        shuffled.frame_class_embeddings.at(t, d) = frames.frame_class_embeddings.at(perm[t], d);
        for (std::size_t k = 0; k < 3; ++k) {
          shuffled.patch_embeddings.at(t, k, d) = frames.patch_embeddings.at(perm[t], k, d);
        }
      }
    }
    const Tensor a = Forward(frames, text, params).video_feature;
    const Tensor b = Forward(shuffled, text, params).video_feature;
    for (std::size_t d = 0; d < 4; ++d) {
      EXPECT_LE(std::abs(a[d] - b[d]), 1e-9 * std::max(1.0, std::abs(a[d])));
    }
  }
}

TEST(Forward, WordPermutationInvariance) {
  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    const auto frames = RandomFrames(rng, 4, 3, 4);
    const auto text = RandomText(rng, 3, 4);
    const auto params = RandomParams(rng, 4);
    TextEmbeddingSequence rev = text;
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t d = 0; d < 4; ++d) {
        rev.word_embeddings.at(l, d) = text.word_embeddings.at(2 - l, d);
      }
    }
    const STIOutput a = Forward(frames, text, params);
    const STIOutput b = Forward(frames, rev, params);
    EXPECT_TRUE(a.spatial.spatial_scores.BitwiseEquals(b.spatial.spatial_scores));
    EXPECT_LT(MaxAbsDiff(a.temporal.weights, b.temporal.weights), 1e-12);
  }
}

TEST(Forward, ZeroWordsDegradeToUniform) {
  Rng rng(21);
  const auto frames = RandomFrames(rng, 4, 3, 4);
  STIParameters params = RandomParams(rng, 4);
  params.w_word = Tensor(Shape{4, 4});
  const STIOutput out = Forward(frames, RandomText(rng, 2, 4), params);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(out.spatial.spatial_scores[t], 0.0);
    EXPECT_NEAR(out.temporal.weights[t], 0.25, 1e-15);
  }
}

TEST(SaliencyAudit, RecordsEveryEvaluation) {
  ResetSaliencyAudit();
  Rng rng(22);
  for (int i = 0; i < 5; ++i) {
    Forward(RandomFrames(rng, 3, 2, 3), RandomText(rng, 2, 3), RandomParams(rng, 3));
  }
  const SaliencyAudit audit = GetSaliencyAudit();
  EXPECT_GE(audit.evaluations, 5u);
  EXPECT_LT(audit.max_deviation, 1e-9);
}

}  // namespace
}  // namespace stilab::sti
