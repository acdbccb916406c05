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

#include "stilab/objective.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "stilab/error.h"

namespace stilab::objective {
namespace {

void CheckTau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidArgument,
                "loss temperature must be positive, got " +
                    std::to_string(tau));
  }
}

void CheckSquareScores(const Shape &shape, const PositiveSet &positives) {
  const std::size_t b = positives.size();
  if (shape != Shape{b, b}) {
    throw Error(ErrorCode::kShapeMismatch,
                "scores " + ShapeString(shape) + " for a batch of " +
                    std::to_string(b));
  }
}

// -sum W[i][k] log softmax(logits)[i][k]
grad::Var Directional(grad::Tape &tape, grad::Var logits,
                      const PositiveSet &positives) {
  Tensor w = positives.Weights();
  for (double &v : w.data()) v = -v;
  return tape.Sum(tape.Mul(tape.LogSoftmaxRows(logits), tape.Constant(w)));
}

grad::Var UnitCosine(grad::Tape &tape, grad::Var feature, grad::Var unit) {
  return tape.Clamp(tape.Dot(tape.L2Normalize(feature), unit), -1.0, 1.0);
}

template <typename Fn>
double ValueLoss(const Tensor &scores, const PositiveSet &positives,
                 double tau, Fn fn) {
  CheckTau(tau);
  grad::Tape tape;
  const grad::Var s = tape.Constant(scores);
  const grad::Var inv = tape.Constant(Tensor::Scalar(1.0 / tau));
  return tape.value(fn(tape, s, positives, inv))[0];
}

}  // namespace

void RegisterTemperature(grad::ParameterStore &params, double tau) {
  CheckTau(tau);
  params.Register(std::string(kLogTemperature), Tensor::Scalar(std::log(tau)));
}

double CosineSimilarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "cosine of lengths " + std::to_string(u.size()) + " and " +
                    std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "cosine of a zero-norm vector");
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

grad::Var CosineSimilarity(grad::Tape &tape, grad::Var u, grad::Var v) {
  return UnitCosine(tape, u, tape.L2Normalize(v));
}

PositiveSet PositiveSet::FromLabels(std::span<const std::size_t> labels) {
  if (labels.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty batch");
  }
  PositiveSet out;
  out.members.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (labels[k] == labels[i]) out.members[i].push_back(k);
    }
  }
  return out;
}

Tensor PositiveSet::Weights() const {
  const std::size_t b = members.size();
  Tensor w(Shape{b, b});
  for (std::size_t i = 0; i < b; ++i) {
    if (members[i].empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "positive set of anchor " + std::to_string(i) + " is empty");
    }
    const double weight =
        1.0 / (static_cast<double>(b) * static_cast<double>(members[i].size()));
    for (std::size_t k : members[i]) {
      if (k >= b) {
        throw Error(ErrorCode::kInvalidArgument,
                    "positive index " + std::to_string(k) + " out of range");
      }
      w.at(i, k) = weight;
    }
  }
  return w;
}

Model Model::Create(std::size_t dim, sti::StiConfig sti_config) {
  sti_config.Validate();
  Model m;
  m.sti = sti_config;
  encoders::RegisterVideoEncoder(m.params, dim);
  sti::RegisterProjections(m.params, dim);
  RegisterTemperature(m.params);
  return m;
}

std::size_t Model::dim() const {
  return params.Get(encoders::kVideoMix).dim(0);
}

sti::STIParameters Model::StiParameters() const {
  return {params.Get(sti::kPatchProjection), params.Get(sti::kWordProjection),
          sti.tau_saliency};
}

double Model::Temperature() const {
  return std::max(std::exp(params.Get(kLogTemperature)[0]), kMinTemperature);
}

grad::Var Temperature(grad::Tape &tape) {
  return tape.Clamp(tape.Exp(tape.Param(kLogTemperature)), kMinTemperature,
                    std::numeric_limits<double>::infinity());
}

grad::Var ScoreMatrix(grad::Tape &tape, std::span<const Tensor *const> videos,
                      std::span<const encoders::TextEmbeddingSequence *const>
                          columns,
                      const sti::StiConfig &config) {
  if (videos.empty() || columns.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "score matrix needs at least one video and one class");
  }
  struct ColumnNodes {
    grad::Var words;
    grad::Var unit;
  };
  std::map<const encoders::TextEmbeddingSequence *, ColumnNodes> cache;
  std::vector<ColumnNodes> cols;
  cols.reserve(columns.size());
  for (const auto *text : columns) {
    auto it = cache.find(text);
    if (it == cache.end()) {
      if (text->word_embeddings.rank() != 2 ||
          text->word_embeddings.dim(1) != text->dim()) {
        throw Error(ErrorCode::kShapeMismatch,
                    "class text words " +
                        ShapeString(text->word_embeddings.shape()));
      }
      ColumnNodes nodes;
      nodes.words = sti::ProjectWords(tape, tape.Constant(text->word_embeddings));
      nodes.unit = tape.L2Normalize(tape.Constant(text->class_embedding));
      it = cache.emplace(text, nodes).first;
    }
    cols.push_back(it->second);
  }

  std::vector<grad::Var> entries;
  entries.reserve(videos.size() * columns.size());
  for (const Tensor *raw : videos) {
    const encoders::VideoNodes enc = encoders::EncodeVideo(tape, *raw);
    const std::size_t dim = tape.shape(enc.frames)[1];
    for (const auto *text : columns) {
      if (text->dim() != dim) {
        throw Error(ErrorCode::kShapeMismatch,
                    "class text has D=" + std::to_string(text->dim()) +
                        ", video has D=" + std::to_string(dim));
      }
    }
    const grad::Var patches = config.toggles.spatial
                                  ? sti::ProjectPatches(tape, enc.patches)
                                  : enc.patches;
    for (const ColumnNodes &col : cols) {
      const sti::StiNodes nodes = sti::Forward(
          tape, enc.frames, patches, enc.num_patches, col.words, config);
      entries.push_back(UnitCosine(tape, nodes.video_feature, col.unit));
    }
  }
  return tape.Stack(entries, Shape{videos.size(), columns.size()});
}

Tensor ScoreMatrix(const Model &model, std::span<const Tensor *const> videos,
                   std::span<const encoders::TextEmbeddingSequence *const>
                       columns) {
  Tensor out(Shape{videos.size(), columns.size()});
  for (std::size_t i = 0; i < videos.size(); ++i) {
    grad::Tape tape(&model.params);
    const grad::Var row =
        ScoreMatrix(tape, videos.subspan(i, 1), columns, model.sti);
    const Tensor &values = tape.value(row);
    std::copy(values.data().begin(), values.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * columns.size()));
  }
  return out;
}

double ClassScore(const encoders::FrameEmbeddingSet &frames,
                  const encoders::TextEmbeddingSequence &text,
                  const sti::STIParameters &params, sti::Toggles toggles) {
  const sti::STIOutput out = sti::Forward(frames, text, params, toggles);
  return CosineSimilarity(out.video_feature.data(), text.class_embedding.data());
}

grad::Var LossV2C(grad::Tape &tape, grad::Var scores,
                  const PositiveSet &positives, grad::Var inv_tau) {
  CheckSquareScores(tape.shape(scores), positives);
  return Directional(tape, tape.MulScalar(tape.Transpose(scores), inv_tau),
                     positives);
}

grad::Var LossC2V(grad::Tape &tape, grad::Var scores,
                  const PositiveSet &positives, grad::Var inv_tau) {
  CheckSquareScores(tape.shape(scores), positives);
  return Directional(tape, tape.MulScalar(scores, inv_tau), positives);
}

grad::Var TotalLoss(grad::Tape &tape, grad::Var scores,
                    const PositiveSet &positives, grad::Var inv_tau) {
  const grad::Var v2c = LossV2C(tape, scores, positives, inv_tau);
  const grad::Var c2v = LossC2V(tape, scores, positives, inv_tau);
  return tape.Scale(tape.Add(v2c, c2v), 0.5);
}

double LossV2C(const Tensor &scores, const PositiveSet &positives,
               double tau) {
  return ValueLoss(scores, positives, tau,
                   [](auto &t, auto s, const auto &p, auto inv) {
                     return LossV2C(t, s, p, inv);
                   });
}

double LossC2V(const Tensor &scores, const PositiveSet &positives,
               double tau) {
  return ValueLoss(scores, positives, tau,
                   [](auto &t, auto s, const auto &p, auto inv) {
                     return LossC2V(t, s, p, inv);
                   });
}

double TotalLoss(const Tensor &scores, const PositiveSet &positives,
                 double tau) {
  return ValueLoss(scores, positives, tau,
                   [](auto &t, auto s, const auto &p, auto inv) {
                     return TotalLoss(t, s, p, inv);
                   });
}

}  // namespace stilab::objective
