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

// Spatial-temporal interaction between frame/patch embeddings and the word
// embeddings of one class's attribute sentence.
//
//   projected patches  P~ = ReLU(P W_p)                 (T*N_p) x D
//   projected words    A~ = ReLU(A W_w)                 N_w x D
//   spatial score      s_sp[t] = max_{k,l} <P~[t,k], A~[l]>
//   spatial features   f_sp[t] = s_sp[t] * v[t]
//   saliency           s_temp = mean_l softmax_t(<f_sp[t], A~[l]> / tau)
//   video feature      f_st = sum_t s_temp[t] * v[t]
//
// v[t] is the per-frame embedding (mean of the frame's encoded patches).
// The video feature is class-conditional: it is recomputed per class.

#ifndef STILAB_STI_H_
#define STILAB_STI_H_

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "stilab/encoders.h"
#include "stilab/grad.h"
#include "stilab/tensor.h"

namespace stilab::sti {

inline constexpr std::string_view kPatchProjection = "sti.w_patch";
inline constexpr std::string_view kWordProjection = "sti.w_word";
inline constexpr double kDefaultSaliencyTemperature = 0.07;

struct Toggles {
  bool spatial = true;
  bool temporal = true;
};

struct StiConfig {
  double tau_saliency = kDefaultSaliencyTemperature;
  Toggles toggles;

  void Validate() const;
};

struct STIParameters {
  Tensor w_patch;  // D x D
  Tensor w_word;   // D x D
  double tau_saliency = kDefaultSaliencyTemperature;

  static STIParameters Identity(std::size_t dim);
};

// Registers both projections as identity matrices.
void RegisterProjections(grad::ParameterStore &params, std::size_t dim);

struct SpatialResult {
  Tensor spatial_scores;    // T
  Tensor spatial_features;  // T x D
};

struct TemporalSaliency {
  Tensor weights;  // T, sums to 1
};

struct STIOutput {
  Tensor video_feature;  // D
  SpatialResult spatial;
  TemporalSaliency temporal;
};

// --- Value-level operations -------------------------------------------------

// patches: T x N_p x D. Result has the same shape.
Tensor ProjectPatches(const Tensor &patches, const Tensor &w_patch);
// words: N_w x D.
Tensor ProjectWords(const Tensor &words, const Tensor &w_word);

// proj_patches: T x N_p x D; proj_words: N_w x D; frames: T x D.
SpatialResult SpatialInteraction(const Tensor &proj_patches,
                                 const Tensor &proj_words,
                                 const Tensor &frames);

TemporalSaliency ComputeTemporalSaliency(const Tensor &spatial_features,
                                         const Tensor &proj_words, double tau);

Tensor AggregateVideo(const Tensor &frames, const TemporalSaliency &saliency);

Tensor MeanPoolBaseline(const encoders::FrameEmbeddingSet &frames);

STIOutput Forward(const encoders::FrameEmbeddingSet &frames,
                  const encoders::TextEmbeddingSequence &text,
                  const STIParameters &params, Toggles toggles = {});

// --- Tape-level operations --------------------------------------------------

// patches: (T*N_p) x D. Uses kPatchProjection from the tape's store.
grad::Var ProjectPatches(grad::Tape &tape, grad::Var patches);
// words: N_w x D. Uses kWordProjection from the tape's store.
grad::Var ProjectWords(grad::Tape &tape, grad::Var words);

struct StiNodes {
  grad::Var spatial_scores;
  grad::Var spatial_features;
  grad::Var saliency;
  grad::Var video_feature;
};

// frames: T x D; proj_patches: (T*N_p) x D; proj_words: N_w x D.
// proj_patches is not read when the spatial toggle is off.
StiNodes Forward(grad::Tape &tape, grad::Var frames, grad::Var proj_patches,
                 std::size_t num_patches, grad::Var proj_words,
                 const StiConfig &config);

// Process-wide record of |sum(s_temp) - 1| over every saliency computed.
struct SaliencyAudit {
  std::uint64_t evaluations = 0;
  double max_deviation = 0.0;
};
SaliencyAudit GetSaliencyAudit();
void ResetSaliencyAudit();

}  // namespace stilab::sti

#endif  // STILAB_STI_H_
