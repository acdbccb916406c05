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

#include "stilab/eval.h"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "stilab/error.h"
#include "stilab/random.h"
#include "stilab/sti.h"

namespace stilab::eval {
namespace {

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream OpenOut(const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  return out;
}

void Finish(std::ofstream &out, const std::filesystem::path &path) {
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

trainer::LabeledSet MakeClassSubset(const corpus::SyntheticCorpus &corpus,
                                    const corpus::ClassTexts &texts,
                                    std::span<const std::size_t> class_indices) {
  if (texts.embeddings.size() != corpus.classes.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(texts.embeddings.size()) + " class texts for " +
                    std::to_string(corpus.classes.size()) + " classes");
  }
  trainer::LabeledSet out;
  std::vector<std::size_t> position(corpus.classes.size(), SIZE_MAX);
  for (std::size_t k = 0; k < class_indices.size(); ++k) {
    const std::size_t c = class_indices[k];
    if (c >= corpus.classes.size() || position[c] != SIZE_MAX) {
      throw Error(ErrorCode::kInvalidArgument,
                  "bad or repeated class index " + std::to_string(c));
    }
    position[c] = k;
    out.classes.push_back(&texts.embeddings[c]);
  }
  for (const auto &v : corpus.videos) {
    if (position[v.label] == SIZE_MAX) continue;
    out.videos.push_back(&v.raw);
    out.labels.push_back(position[v.label]);
  }
  return out;
}

std::size_t ArgMax(std::span<const double> scores) {
  if (scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "argmax of no scores");
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

bool InTopK(std::span<const double> scores, std::size_t label, std::size_t k) {
  if (label >= scores.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "label " + std::to_string(label) + " outside " +
                    std::to_string(scores.size()) + " classes");
  }
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[label] || (scores[j] == scores[label] && j < label)) {
      ++ahead;
    }
  }
  return ahead < k;
}

Prediction ZeroShotClassify(
    const Tensor &raw_video,
    std::span<const encoders::TextEmbeddingSequence *const> classes,
    const objective::Model &model) {
  if (classes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no candidate classes");
  }
  const Tensor *video = &raw_video;
  const Tensor row = objective::ScoreMatrix(model, {&video, 1}, classes);
  Prediction p;
  p.scores = row.values();
  p.index = ArgMax(p.scores);
  return p;
}

double TopKAccuracy(const Tensor &scores, std::span<const std::size_t> labels,
                    std::size_t k) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "scores " + ShapeString(scores.shape()) + " for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "empty split");
  const std::size_t classes = scores.dim(1);
  const std::size_t kk = std::min(k, classes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = std::span<const double>(scores.data()).subspan(
        i * classes, classes);
    if (InTopK(row, labels[i], kk)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

SplitMetrics EvaluateScores(const Tensor &scores,
                            std::span<const std::size_t> labels) {
  SplitMetrics m;
  m.top1 = TopKAccuracy(scores, labels, 1);
  m.top5 = TopKAccuracy(scores, labels, 5);
  m.videos = labels.size();
  return m;
}

SplitMetrics EvaluateSplit(const trainer::LabeledSet &split,
                           const objective::Model &model) {
  split.Validate();
  const Tensor scores =
      objective::ScoreMatrix(model, split.videos, split.classes);
  return EvaluateScores(scores, split.labels);
}

Aggregate AggregateSplits(std::span<const double> values) {
  if (values.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "aggregation needs exactly 3 split values, got " +
                    std::to_string(values.size()));
  }
  Aggregate a;
  // Offsets from the first value keep equal inputs exact.
  a.mean = values[0] + ((values[1] - values[0]) + (values[2] - values[0])) / 3.0;
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(sq / 2.0);
  return a;
}

std::vector<std::size_t> SampleCategorySubset(std::size_t n,
                                              std::size_t subset_size,
                                              std::uint64_t seed) {
  if (subset_size > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "subset of " + std::to_string(subset_size) + " from " +
                    std::to_string(n) + " categories");
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  Rng rng(seed);
  rng.Shuffle(all);
  all.resize(subset_size);
  return all;
}

void WriteMetricReport(const std::filesystem::path &path,
                       std::span<const SplitRow> rows) {
  std::vector<double> top1;
  for (const auto &r : rows) top1.push_back(r.metrics.top1);
  const Aggregate agg = AggregateSplits(top1);
  std::ofstream out = OpenOut(path);
  out << "split_id,top1,top5\n";
  for (const auto &r : rows) {
    out << r.split_id << ',' << Num(r.metrics.top1) << ','
        << Num(r.metrics.top5) << '\n';
  }
  out << "summary," << Num(agg.mean) << ',' << Num(agg.std) << '\n';
  Finish(out, path);
}

void WriteFewShotReport(const std::filesystem::path &path,
                        std::span<const ShotRow> rows) {
  std::ofstream out = OpenOut(path);
  out << "shots,top1,top5\n";
  for (const auto &r : rows) {
    out << r.shots << ',' << Num(r.metrics.top1) << ','
        << Num(r.metrics.top5) << '\n';
  }
  Finish(out, path);
}

std::vector<SaliencyRow> ComputeSaliency(
    const Tensor &raw_video, const encoders::TextEmbeddingSequence &text,
    const objective::Model &model) {
  const encoders::FrameEmbeddingSet frames = encoders::EncodeVideo(
      raw_video, model.params.Get(encoders::kVideoMix),
      model.params.Get(encoders::kVideoBias));
  const sti::STIOutput out = sti::Forward(frames, text, model.StiParameters(),
                                          model.sti.toggles);
  std::vector<SaliencyRow> rows(frames.num_frames());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    rows[t] = {t, out.spatial.spatial_scores[t], out.temporal.weights[t]};
  }
  return rows;
}

void ExportSaliency(const std::filesystem::path &path,
                    std::span<const SaliencyRow> rows) {
  std::ofstream out = OpenOut(path);
  out << "frame_index,s_sp,s_temp\n";
  for (const auto &r : rows) {
    out << r.frame_index << ',' << Num(r.s_sp) << ',' << Num(r.s_temp) << '\n';
  }
  Finish(out, path);
}

std::vector<SaliencyRow> ReadSaliency(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "frame_index,s_sp,s_temp") {
    throw Error(ErrorCode::kParse, "bad saliency header in " + path.string());
  }
  std::vector<SaliencyRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream s(line);
    SaliencyRow r;
    std::string a, b, c;
    if (!std::getline(s, a, ',') || !std::getline(s, b, ',') ||
        !std::getline(s, c)) {
      throw Error(ErrorCode::kParse, path.string() + ":" +
                                         std::to_string(lineno) +
                                         ": expected 3 fields");
    }
    try {
      r.frame_index = std::stoull(a);
      r.s_sp = std::stod(b);
      r.s_temp = std::stod(c);
    } catch (const std::exception &) {
      throw Error(ErrorCode::kParse, path.string() + ":" +
                                         std::to_string(lineno) +
                                         ": bad number");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace stilab::eval
