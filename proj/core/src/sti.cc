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

#include "stilab/sti.h"

#include <atomic>
#include <cmath>

#include "stilab/error.h"

namespace stilab::sti {
namespace {

std::atomic<std::uint64_t> g_audit_count{0};
std::atomic<double> g_audit_max{0.0};

void RecordSaliency(const Tensor &weights) {
  double total = 0.0;
  for (double w : weights.data()) total += w;
  const double dev = std::fabs(total - 1.0);
  g_audit_count.fetch_add(1, std::memory_order_relaxed);
  double prev = g_audit_max.load(std::memory_order_relaxed);
  while (dev > prev &&
         !g_audit_max.compare_exchange_weak(prev, dev,
                                            std::memory_order_relaxed)) {
  }
}

void CheckSquare(const Tensor &w, std::size_t dim, const char *what) {
  if (w.shape() != Shape{dim, dim}) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + " must be " + std::to_string(dim) + "x" +
                    std::to_string(dim) + ", got " + ShapeString(w.shape()));
  }
}

void CheckTau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidArgument,
                "saliency temperature must be positive, got " +
                    std::to_string(tau));
  }
}

// s_sp and f_sp on a tape.
std::pair<grad::Var, grad::Var> SpatialOnTape(grad::Tape &tape,
                                              grad::Var frames,
                                              grad::Var proj_patches,
                                              std::size_t num_patches,
                                              grad::Var proj_words) {
  const Shape &fs = tape.shape(frames);
  const Shape &ps = tape.shape(proj_patches);
  const Shape &ws = tape.shape(proj_words);
  if (ws.size() != 2 || ws[0] == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "spatial interaction needs at least one word");
  }
  if (fs.size() != 2 || ps.size() != 2 || ps[0] != fs[0] * num_patches ||
      ps[1] != fs[1] || ws[1] != fs[1]) {
    throw Error(ErrorCode::kShapeMismatch,
                "frames " + ShapeString(fs) + ", patches " + ShapeString(ps) +
                    ", words " + ShapeString(ws));
  }
  const std::size_t frames_n = fs[0], words_n = ws[0];
  // Row t of the reshaped similarity holds the N_p x N_w block of frame t in
  // (patch, word) order, so the row argmax resolves ties to the lowest pair.
  grad::Var sim = tape.MatMulNT(proj_patches, proj_words);
  grad::Var blocks = tape.Reshape(sim, Shape{frames_n, num_patches * words_n});
  grad::Var scores = tape.RowMax(blocks);
  grad::Var features = tape.ScaleRows(frames, scores);
  return {scores, features};
}

grad::Var SaliencyOnTape(grad::Tape &tape, grad::Var features,
                         grad::Var proj_words, double tau) {
  CheckTau(tau);
  const Shape &ws = tape.shape(proj_words);
  if (ws.size() != 2 || ws[0] == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "temporal saliency needs at least one word");
  }
  if (tape.shape(features).size() != 2 || tape.shape(features)[1] != ws[1]) {
    throw Error(ErrorCode::kShapeMismatch,
                "features " + ShapeString(tape.shape(features)) + ", words " +
                    ShapeString(ws));
  }
  grad::Var logits = tape.Scale(tape.MatMulNT(features, proj_words), 1.0 / tau);
  // N_w x T: one distribution over frames per word.
  grad::Var per_word = tape.SoftmaxRows(tape.Transpose(logits));
  grad::Var saliency = tape.MeanRows(per_word);
  RecordSaliency(tape.value(saliency));
  return saliency;
}

grad::Var ProjectOnTape(grad::Tape &tape, grad::Var x, grad::Var w) {
  return tape.Relu(tape.MatMul(x, w));
}

}  // namespace

void StiConfig::Validate() const { CheckTau(tau_saliency); }

STIParameters STIParameters::Identity(std::size_t dim) {
  return {Tensor::Identity(dim), Tensor::Identity(dim),
          kDefaultSaliencyTemperature};
}

void RegisterProjections(grad::ParameterStore &params, std::size_t dim) {
  params.Register(std::string(kPatchProjection), Tensor::Identity(dim));
  params.Register(std::string(kWordProjection), Tensor::Identity(dim));
}

// --- Value level -------------------------------------------------------------

Tensor ProjectPatches(const Tensor &patches, const Tensor &w_patch) {
  if (patches.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "patches must be T x N_p x D, got " +
                    ShapeString(patches.shape()));
  }
  CheckSquare(w_patch, patches.dim(2), "W_p");
  grad::Tape tape;
  grad::Var x = tape.Constant(
      patches.Reshaped(Shape{patches.dim(0) * patches.dim(1), patches.dim(2)}));
  grad::Var y = ProjectOnTape(tape, x, tape.Constant(w_patch));
  return tape.value(y).Reshaped(patches.shape());
}

Tensor ProjectWords(const Tensor &words, const Tensor &w_word) {
  if (words.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "words must be N_w x D, got " + ShapeString(words.shape()));
  }
  CheckSquare(w_word, words.dim(1), "W_w");
  grad::Tape tape;
  grad::Var y =
      ProjectOnTape(tape, tape.Constant(words), tape.Constant(w_word));
  return tape.value(y);
}

SpatialResult SpatialInteraction(const Tensor &proj_patches,
                                 const Tensor &proj_words,
                                 const Tensor &frames) {
  if (proj_patches.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "projected patches must be T x N_p x D, got " +
                    ShapeString(proj_patches.shape()));
  }
  const std::size_t T = proj_patches.dim(0), P = proj_patches.dim(1),
                    D = proj_patches.dim(2);
  grad::Tape tape;
  auto [scores, features] = SpatialOnTape(
      tape, tape.Constant(frames),
      tape.Constant(proj_patches.Reshaped(Shape{T * P, D})), P,
      tape.Constant(proj_words));
  return {tape.value(scores), tape.value(features)};
}

TemporalSaliency ComputeTemporalSaliency(const Tensor &spatial_features,
                                         const Tensor &proj_words,
                                         double tau) {
  grad::Tape tape;
  grad::Var s = SaliencyOnTape(tape, tape.Constant(spatial_features),
                               tape.Constant(proj_words), tau);
  return {tape.value(s)};
}

Tensor AggregateVideo(const Tensor &frames, const TemporalSaliency &saliency) {
  grad::Tape tape;
  grad::Var f = tape.WeightedSum(tape.Constant(frames),
                                 tape.Constant(saliency.weights));
  return tape.value(f);
}

Tensor MeanPoolBaseline(const encoders::FrameEmbeddingSet &frames) {
  grad::Tape tape;
  grad::Var m = tape.MeanRows(tape.Constant(frames.frame_class_embeddings));
  return tape.value(m);
}

STIOutput Forward(const encoders::FrameEmbeddingSet &frames,
                  const encoders::TextEmbeddingSequence &text,
                  const STIParameters &params, Toggles toggles) {
  const std::size_t T = frames.num_frames(), P = frames.num_patches(),
                    D = frames.dim();
  CheckSquare(params.w_patch, D, "W_p");
  CheckSquare(params.w_word, D, "W_w");
  if (text.word_embeddings.rank() != 2 || text.word_embeddings.dim(1) != D) {
    throw Error(ErrorCode::kShapeMismatch,
                "text is " + ShapeString(text.word_embeddings.shape()) +
                    " but frames have D=" + std::to_string(D));
  }
  grad::Tape tape;
  grad::Var v = tape.Constant(frames.frame_class_embeddings);
  grad::Var p = ProjectOnTape(
      tape,
      tape.Constant(frames.patch_embeddings.Reshaped(Shape{T * P, D})),
      tape.Constant(params.w_patch));
  grad::Var a = ProjectOnTape(tape, tape.Constant(text.word_embeddings),
                              tape.Constant(params.w_word));
  const StiNodes nodes =
      Forward(tape, v, p, P, a, StiConfig{params.tau_saliency, toggles});
  STIOutput out;
  out.video_feature = tape.value(nodes.video_feature);
  out.spatial.spatial_scores = tape.value(nodes.spatial_scores);
  out.spatial.spatial_features = tape.value(nodes.spatial_features);
  out.temporal.weights = tape.value(nodes.saliency);
  return out;
}

// --- Tape level --------------------------------------------------------------

grad::Var ProjectPatches(grad::Tape &tape, grad::Var patches) {
  return ProjectOnTape(tape, patches, tape.Param(kPatchProjection));
}

grad::Var ProjectWords(grad::Tape &tape, grad::Var words) {
  return ProjectOnTape(tape, words, tape.Param(kWordProjection));
}

StiNodes Forward(grad::Tape &tape, grad::Var frames, grad::Var proj_patches,
                 std::size_t num_patches, grad::Var proj_words,
                 const StiConfig &config) {
  config.Validate();
  const Shape &fs = tape.shape(frames);
  if (fs.size() != 2 || fs[0] == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "frames must be T x D with T >= 1, got " + ShapeString(fs));
  }
  const std::size_t T = fs[0];
  if (tape.shape(proj_words).size() != 2 || tape.shape(proj_words)[0] == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "interaction needs at least one word");
  }

  StiNodes out;
  if (config.toggles.spatial) {
    std::tie(out.spatial_scores, out.spatial_features) =
        SpatialOnTape(tape, frames, proj_patches, num_patches, proj_words);
  } else {
    out.spatial_scores = tape.Constant(Tensor(Shape{T}, 1.0));
    out.spatial_features = frames;
  }

  if (config.toggles.temporal) {
    out.saliency = SaliencyOnTape(tape, out.spatial_features, proj_words,
                                  config.tau_saliency);
    out.video_feature = tape.WeightedSum(frames, out.saliency);
  } else {
    out.saliency =
        tape.Constant(Tensor(Shape{T}, 1.0 / static_cast<double>(T)));
    RecordSaliency(tape.value(out.saliency));
    // Same reduction as the mean-pool baseline.
    out.video_feature = tape.MeanRows(frames);
  }
  return out;
}

SaliencyAudit GetSaliencyAudit() {
  return {g_audit_count.load(std::memory_order_relaxed),
          g_audit_max.load(std::memory_order_relaxed)};
}

void ResetSaliencyAudit() {
  g_audit_count.store(0, std::memory_order_relaxed);
  g_audit_max.store(0.0, std::memory_order_relaxed);
}

}  // namespace stilab::sti
