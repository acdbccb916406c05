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

// Class-conditional score matrix and the symmetric contrastive loss.
//
// scores[i][j] = cos(z_j, f_st(video_i | class j)). With positives K(i) =
// {k : label_k = label_i} and W[i][k] = 1 / (B |K(i)|):
//   C2V = -sum_{i,k} W[i][k] log softmax_row(scores / tau)[i][k]
//   V2C = -sum_{i,k} W[i][k] log softmax_row(scores^T / tau)[i][k]
//   total = (V2C + C2V) / 2

#ifndef STILAB_OBJECTIVE_H_
#define STILAB_OBJECTIVE_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "stilab/encoders.h"
#include "stilab/grad.h"
#include "stilab/sti.h"
#include "stilab/tensor.h"

namespace stilab::objective {

inline constexpr std::string_view kLogTemperature = "loss.log_tau";
inline constexpr double kInitialTemperature = 0.07;
inline constexpr double kMinTemperature = 1e-3;

void RegisterTemperature(grad::ParameterStore &params,
                         double tau = kInitialTemperature);

// Clamped to [-1, 1]. Zero-norm input throws kInvalidArgument.
double CosineSimilarity(std::span<const double> u, std::span<const double> v);
grad::Var CosineSimilarity(grad::Tape &tape, grad::Var u, grad::Var v);

struct PositiveSet {
  std::vector<std::vector<std::size_t>> members;  // K(i), ascending

  static PositiveSet FromLabels(std::span<const std::size_t> labels);
  std::size_t size() const { return members.size(); }
  // B x B constant weights 1 / (B |K(i)|) on positives.
  Tensor Weights() const;
};

// All trainable state: video encoder, projections, loss temperature.
struct Model {
  grad::ParameterStore params;
  sti::StiConfig sti;

  static Model Create(std::size_t dim, sti::StiConfig sti = {});
  std::size_t dim() const;
  sti::STIParameters StiParameters() const;
  double Temperature() const;
};

// Clamped exp(log_tau) from the tape's store.
grad::Var Temperature(grad::Tape &tape);

// rows: raw videos (T x N_p x D); columns: class texts. Repeated column
// pointers share one text projection on the tape.
grad::Var ScoreMatrix(grad::Tape &tape, std::span<const Tensor *const> videos,
                      std::span<const encoders::TextEmbeddingSequence *const>
                          columns,
                      const sti::StiConfig &config);

Tensor ScoreMatrix(const Model &model, std::span<const Tensor *const> videos,
                   std::span<const encoders::TextEmbeddingSequence *const>
                       columns);

// One entry from already-encoded frames.
double ClassScore(const encoders::FrameEmbeddingSet &frames,
                  const encoders::TextEmbeddingSequence &text,
                  const sti::STIParameters &params, sti::Toggles toggles = {});

// Tape forms take 1/tau as a scalar node.
grad::Var LossV2C(grad::Tape &tape, grad::Var scores,
                  const PositiveSet &positives, grad::Var inv_tau);
grad::Var LossC2V(grad::Tape &tape, grad::Var scores,
                  const PositiveSet &positives, grad::Var inv_tau);
grad::Var TotalLoss(grad::Tape &tape, grad::Var scores,
                    const PositiveSet &positives, grad::Var inv_tau);

double LossV2C(const Tensor &scores, const PositiveSet &positives, double tau);
double LossC2V(const Tensor &scores, const PositiveSet &positives, double tau);
double TotalLoss(const Tensor &scores, const PositiveSet &positives,
                 double tau);

}  // namespace stilab::objective

#endif  // STILAB_OBJECTIVE_H_
