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

#include <cmath>
#include <fstream>
#include <set>

#include "stilab/eval.h"
#include "test_util.h"

namespace stilab::eval {
namespace {

using stilab::testing::RandomTensor;
using stilab::testing::TempDir;

std::string ReadAll(const std::filesystem::path &p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(ArgMaxTest, TiesGoToSmallestIndex) {
  EXPECT_EQ(ArgMax(std::vector<double>{0.3}), 0u);
  EXPECT_EQ(ArgMax(std::vector<double>{0.1, 0.7, 0.7, 0.2}), 1u);
  EXPECT_STILAB_ERROR(ArgMax(std::vector<double>{}), ErrorCode::kInvalidArgument);
}

TEST(InTopKTest, OrdersByScoreThenIndex) {
  const std::vector<double> s = {0.5, 0.9, 0.5, 0.1};
  EXPECT_TRUE(InTopK(s, 1, 1));
  EXPECT_TRUE(InTopK(s, 0, 2));
  EXPECT_FALSE(InTopK(s, 2, 2));
  EXPECT_TRUE(InTopK(s, 2, 3));
}

TEST(TopK, CountingAndClamp) {
  // 10 videos over 3 classes; 7 have their label scored highest.
  Tensor s(Shape{10, 3});
  std::vector<std::size_t> labels(10);
  for (std::size_t i = 0; i < 10; ++i) {
    labels[i] = i % 3;
    const std::size_t top = i < 7 ? labels[i] : (labels[i] + 1) % 3;
    s.at(i, top) = 1.0;
    s.at(i, (top + 2) % 3) = 0.5;
  }
  const SplitMetrics m = EvaluateScores(s, labels);
  EXPECT_DOUBLE_EQ(m.top1, 0.7);
  EXPECT_EQ(m.top5, 1.0);  // clamps to top-3
  EXPECT_EQ(TopKAccuracy(s, labels, 3), m.top5);
  EXPECT_STILAB_ERROR(TopKAccuracy(Tensor(Shape{0, 3}), {}, 1),
                      ErrorCode::kInvalidArgument);
}

TEST(TopK, AllCorrectAndMonotone) {
  Rng rng(40);
  const Tensor s = RandomTensor(rng, Shape{30, 7});
  std::vector<std::size_t> labels(30);
  for (auto &l : labels) l = rng.UniformIndex(7);
  double prev = 0.0;
  for (std::size_t k = 1; k <= 8; ++k) {
    const double a = TopKAccuracy(s, labels, k);
    EXPECT_GE(a, prev);
    prev = a;
  }
  EXPECT_EQ(prev, 1.0);
  Tensor perfect(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) perfect.at(i, i) = 1.0;
  const SplitMetrics m = EvaluateScores(perfect, std::vector<std::size_t>{0, 1, 2});
  EXPECT_EQ(m.top1, 1.0);
  EXPECT_EQ(m.top5, 1.0);
}

TEST(AggregateTest, Examples) {
  Aggregate a = AggregateSplits(std::vector<double>{78, 79, 80});
  EXPECT_DOUBLE_EQ(a.mean, 79.0);
  EXPECT_DOUBLE_EQ(a.std, 1.0);
  a = AggregateSplits(std::vector<double>{0.4, 0.4, 0.4});
  EXPECT_DOUBLE_EQ(a.mean, 0.4);
  EXPECT_EQ(a.std, 0.0);
  a = AggregateSplits(std::vector<double>{0, 0, 3});
  EXPECT_NEAR(a.mean, 1.0, 1e-12);
  EXPECT_NEAR(a.std, std::sqrt(3.0), 1e-12);
  EXPECT_STILAB_ERROR(AggregateSplits(std::vector<double>{1, 2}),
                      ErrorCode::kInvalidArgument);
}

TEST(CategorySubset, FullScaleAndBoundaries) {
  const auto s = SampleCategorySubset(220, 160, 1);
  EXPECT_EQ(s.size(), 160u);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 160u);
  EXPECT_EQ(s, SampleCategorySubset(220, 160, 1));
  EXPECT_NE(s, SampleCategorySubset(220, 160, 2));
  auto all = SampleCategorySubset(12, 12, 3);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(all[i], i);
  EXPECT_STILAB_ERROR(SampleCategorySubset(5, 6, 0), ErrorCode::kInvalidArgument);
}

TEST(Reports, MetricAndFewShotFormats) {
  TempDir dir("reports");
  std::vector<SplitRow> rows = {{1, {0.5, 0.75, 4}}, {2, {0.25, 1.0, 4}},
                                {3, {0.75, 1.0, 4}}};
  WriteMetricReport(dir / "m.csv", rows);
  EXPECT_EQ(ReadAll(dir / "m.csv"),
            "split_id,top1,top5\n1,0.5,0.75\n2,0.25,1\n3,0.75,1\nsummary,0.5,0.25\n");
  std::vector<ShotRow> shots = {{2, {0.5, 1.0, 4}}};
  WriteFewShotReport(dir / "f.csv", shots);
  EXPECT_EQ(ReadAll(dir / "f.csv"), "shots,top1,top5\n2,0.5,1\n");
}

struct World {
  corpus::SyntheticCorpus corpus;
  corpus::ClassTexts texts;
  std::vector<std::size_t> all;
  trainer::LabeledSet set;

  explicit World(double noise, std::uint64_t seed = 0, std::size_t dim = 32) {
    corpus::SyntheticCorpusSpec spec;
    spec.dim = dim;
    spec.noise_scale = noise;
    spec.videos_per_class = 5;
    spec.seed = seed;
    corpus = corpus::GenerateSyntheticCorpus(spec);
    texts = corpus::BuildClassTexts(corpus.descriptions, 8, {},
                                    attributes::StopwordSet::Default(),
                                    encoders::TextEncoder(0, spec.dim));
    for (std::size_t k = 0; k < corpus.classes.size(); ++k) all.push_back(k);
    set = MakeClassSubset(corpus, texts, all);
  }
};

TEST(ZeroShot, SingleClassAlwaysPredictsIt) {
  const World w(0.1);
  const objective::Model m = objective::Model::Create(32);
  std::vector<const encoders::TextEmbeddingSequence *> one = {&w.texts.embeddings[3]};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ZeroShotClassify(*w.set.videos[i], one, m).index, 0u);
  }
}

TEST(ZeroShot, DuplicateClassTiesToSmallerIndex) {
  const World w(0.1);
  const objective::Model m = objective::Model::Create(32);
  const auto *a = &w.texts.embeddings[0];
  const auto *b = &w.texts.embeddings[1];
  std::vector<const encoders::TextEmbeddingSequence *> cols = {b, a, b, a};
  for (std::size_t i = 0; i < 10; ++i) {
    const Prediction p = ZeroShotClassify(*w.set.videos[i], cols, m);
    EXPECT_EQ(p.scores[0], p.scores[2]);
    EXPECT_LT(p.index, 2u);
  }
}

// Every patch shows one of class j's concept latents, without noise. At
// D = 32 crosstalk between hashed token vectors flips a few classes, so the
// oracle runs at D = 128.
TEST(ZeroShot, ConceptOnlyVideoPredictsItsClass) {
  const std::size_t T = 8, P = 16, D = 128;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const World w(0.0, seed, D);
    const objective::Model m = objective::Model::Create(D);
    std::vector<const encoders::TextEmbeddingSequence *> cols;
    for (const auto &t : w.texts.embeddings) cols.push_back(&t);
    for (std::size_t j = 0; j < w.corpus.classes.size(); ++j) {
      const auto &concepts = w.corpus.classes[j].concepts;
      Tensor video(Shape{T, P, D});
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < P; ++k) {
          const Tensor &c = w.corpus.concept_vectors[concepts[(t + k) % concepts.size()]];
          for (std::size_t d = 0; d < D; ++d) video.at(t, k, d) = c[d];
        }
      }
      EXPECT_EQ(ZeroShotClassify(video, cols, m).index, j)
          << "seed " << seed << " " << w.corpus.classes[j].name;
    }
  }
}

TEST(ZeroShot, RandomParametersSitAtChance) {
  const World w(0.1);
  Rng rng(41);
  const double k = static_cast<double>(w.all.size());
  std::size_t hits = 0, total = 0;
  for (int r = 0; r < 20; ++r) {
    objective::Model m = objective::Model::Create(32);
    for (const std::string &name : m.params.names()) {
      if (name == objective::kLogTemperature) continue;
      m.params.Set(name, RandomTensor(rng, m.params.Get(name).shape()));
    }
    const SplitMetrics s = EvaluateSplit(w.set, m);
    hits += static_cast<std::size_t>(std::lround(s.top1 * s.videos));
    total += s.videos;
  }
  const double p = 1.0 / k;
  const double acc = static_cast<double>(hits) / static_cast<double>(total);
  const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(total));
  EXPECT_LE(std::abs(acc - p), 3.0 * sigma) << acc << " vs " << p;
}

TEST(Saliency, RowsSumAndRoundTrip) {
  const World w(0.1);
  const objective::Model m = objective::Model::Create(32);
  const auto rows = ComputeSaliency(*w.set.videos[0], w.texts.embeddings[0], m);
  ASSERT_EQ(rows.size(), 8u);
  double sum = 0.0;
  for (const auto &r : rows) {
    sum += r.s_temp;
    EXPECT_GE(r.s_sp, 0.0);
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  TempDir dir("saliency");
  ExportSaliency(dir / "s.csv", rows);
  const std::string text = ReadAll(dir / "s.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  const auto back = ReadSaliency(dir / "s.csv");
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    EXPECT_EQ(back[t].frame_index, t);
    EXPECT_EQ(back[t].s_sp, rows[t].s_sp);
    EXPECT_EQ(back[t].s_temp, rows[t].s_temp);
  }
}

TEST(Saliency, StaticVideoIsUniform) {
  const World w(0.1);
  Tensor video = *w.set.videos[0];
  const std::size_t per_frame = video.dim(1) * video.dim(2);
  for (std::size_t t = 1; t < video.dim(0); ++t) {
    for (std::size_t i = 0; i < per_frame; ++i) video[t * per_frame + i] = video[i];
  }
  const objective::Model m = objective::Model::Create(32);
  for (const auto &r : ComputeSaliency(video, w.texts.embeddings[0], m)) {
    EXPECT_NEAR(r.s_temp, 0.125, 1e-15);
  }
}

TEST(Saliency, BadFileIsParseError) {
  TempDir dir("saliency_bad");
  std::ofstream(dir / "s.csv") << "frame,s\n";
  EXPECT_STILAB_ERROR(ReadSaliency(dir / "s.csv"), ErrorCode::kParse);
  std::ofstream(dir / "t.csv") << "frame_index,s_sp,s_temp\n0,abc,1\n";
  EXPECT_STILAB_ERROR(ReadSaliency(dir / "t.csv"), ErrorCode::kParse);
}

TEST(ClassSubset, RenumbersLabels) {
  const World w(0.1);
  const std::vector<std::size_t> pick = {7, 2};
  const auto s = MakeClassSubset(w.corpus, w.texts, pick);
  EXPECT_EQ(s.size(), 10u);
  EXPECT_EQ(s.classes[0], &w.texts.embeddings[7]);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT(s.labels[i], 2u);
  const std::vector<std::size_t> dup = {1, 1};
  EXPECT_STILAB_ERROR(MakeClassSubset(w.corpus, w.texts, dup),
                      ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace stilab::eval
