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

// Zero-shot and few-shot evaluation protocols.

#ifndef STILAB_EVAL_H_
#define STILAB_EVAL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stilab/corpus.h"
#include "stilab/encoders.h"
#include "stilab/objective.h"
#include "stilab/tensor.h"
#include "stilab/trainer.h"

namespace stilab::eval {

// Videos of `class_indices` with labels renumbered to positions in that list.
// The result points into `corpus` and `texts`.
trainer::LabeledSet MakeClassSubset(const corpus::SyntheticCorpus &corpus,
                                    const corpus::ClassTexts &texts,
                                    std::span<const std::size_t> class_indices);

// Ties resolve to the smallest index.
std::size_t ArgMax(std::span<const double> scores);

// True if `label` is among the k best by (score desc, index asc).
bool InTopK(std::span<const double> scores, std::size_t label, std::size_t k);

struct Prediction {
  std::size_t index = 0;
  std::vector<double> scores;
};

Prediction ZeroShotClassify(
    const Tensor &raw_video,
    std::span<const encoders::TextEmbeddingSequence *const> classes,
    const objective::Model &model);

struct SplitMetrics {
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t videos = 0;
};

// Fraction of rows whose label is in the top-k; k clamps to the column count.
double TopKAccuracy(const Tensor &scores, std::span<const std::size_t> labels,
                    std::size_t k);
SplitMetrics EvaluateScores(const Tensor &scores,
                            std::span<const std::size_t> labels);
SplitMetrics EvaluateSplit(const trainer::LabeledSet &split,
                           const objective::Model &model);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1)
};
// Exactly three values.
Aggregate AggregateSplits(std::span<const double> values);

// Seeded uniform sample without replacement of `subset_size` of [0, n).
std::vector<std::size_t> SampleCategorySubset(std::size_t n,
                                              std::size_t subset_size,
                                              std::uint64_t seed);

struct SplitRow {
  int split_id = 0;
  SplitMetrics metrics;
};
// "split_id,top1,top5" rows then "summary,<mean top1>,<std top1>".
void WriteMetricReport(const std::filesystem::path &path,
                       std::span<const SplitRow> rows);

struct ShotRow {
  std::size_t shots = 0;
  SplitMetrics metrics;
};
// "shots,top1,top5".
void WriteFewShotReport(const std::filesystem::path &path,
                        std::span<const ShotRow> rows);

struct SaliencyRow {
  std::size_t frame_index = 0;
  double s_sp = 0.0;
  double s_temp = 0.0;
};

std::vector<SaliencyRow> ComputeSaliency(
    const Tensor &raw_video, const encoders::TextEmbeddingSequence &text,
    const objective::Model &model);
// "frame_index,s_sp,s_temp", values at 17 significant digits.
void ExportSaliency(const std::filesystem::path &path,
                    std::span<const SaliencyRow> rows);
std::vector<SaliencyRow> ReadSaliency(const std::filesystem::path &path);

}  // namespace stilab::eval

#endif  // STILAB_EVAL_H_
