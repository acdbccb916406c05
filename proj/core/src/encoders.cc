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

#include "stilab/encoders.h"

#include <cmath>

#include "stilab/error.h"
#include "stilab/random.h"

namespace stilab::encoders {
namespace {

bool IsTokenByte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

std::vector<std::string> Tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (IsTokenByte(c)) {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32)
                                               : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TextEncoder::TextEncoder(std::uint64_t table_seed, std::size_t dim)
    : table_seed_(table_seed), dim_(dim) {
  if (dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "text encoder dimension is 0");
  }
}

Tensor TextEncoder::TokenEmbedding(std::string_view token) const {
  Rng rng(MixSeed(Fnv1a64(token), table_seed_));
  Tensor v(Shape{dim_});
  double sq = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    v[i] = rng.Normal();
    sq += v[i] * v[i];
  }
  const double norm = std::sqrt(sq);
  for (std::size_t i = 0; i < dim_; ++i) v[i] /= norm;
  return v;
}

TextEmbeddingSequence TextEncoder::Encode(
    std::span<const std::string> tokens) const {
  if (tokens.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot encode an empty sentence");
  }
  TextEmbeddingSequence out;
  out.token_texts.assign(tokens.begin(), tokens.end());
  out.word_embeddings = Tensor(Shape{tokens.size(), dim_});
  Tensor mean(Shape{dim_});
  const double w = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    const Tensor v = TokenEmbedding(tokens[n]);
    auto row = out.word_embeddings.row(n);
    for (std::size_t i = 0; i < dim_; ++i) {
      row[i] = v[i];
      mean[i] += w * v[i];
    }
  }
  double sq = 0.0;
  for (double x : mean.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) {
    // Only possible when token vectors cancel exactly.
    throw Error(ErrorCode::kInvalidArgument, "sentence embedding has zero norm");
  }
  for (double &x : mean.data()) x /= norm;
  out.class_embedding = std::move(mean);
  return out;
}

TextEmbeddingSequence TextEncoder::EncodeSentence(
    std::string_view sentence) const {
  const auto tokens = Tokenize(sentence);
  return Encode(tokens);
}

void RegisterVideoEncoder(grad::ParameterStore &params, std::size_t dim) {
  params.Register(std::string(kVideoMix), Tensor::Identity(dim));
  params.Register(std::string(kVideoBias), Tensor(Shape{dim}));
}

VideoNodes EncodeVideo(grad::Tape &tape, const Tensor &raw) {
  if (raw.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "raw video must be T x N_p x D, got " +
                    ShapeString(raw.shape()));
  }
  const std::size_t frames = raw.dim(0), patches = raw.dim(1), dim = raw.dim(2);
  grad::Var mix = tape.Param(kVideoMix);
  grad::Var bias = tape.Param(kVideoBias);
  if (tape.shape(mix) != Shape{dim, dim}) {
    throw Error(ErrorCode::kShapeMismatch,
                "video is D=" + std::to_string(dim) + " but encoder is " +
                    ShapeString(tape.shape(mix)));
  }
  grad::Var x = tape.Constant(raw.Reshaped(Shape{frames * patches, dim}));
  VideoNodes out;
  out.patches = tape.AddBias(tape.MatMul(x, mix), bias);
  out.frames = tape.GroupMean(out.patches, patches);
  out.num_frames = frames;
  out.num_patches = patches;
  return out;
}

FrameEmbeddingSet EncodeVideo(const Tensor &raw, const Tensor &mix,
                              const Tensor &bias) {
  grad::ParameterStore params;
  params.Register(std::string(kVideoMix), mix);
  params.Register(std::string(kVideoBias), bias);
  grad::Tape tape(&params);
  const VideoNodes nodes = EncodeVideo(tape, raw);
  FrameEmbeddingSet out;
  out.patch_embeddings = tape.value(nodes.patches).Reshaped(raw.shape());
  out.frame_class_embeddings = tape.value(nodes.frames);
  return out;
}

}  // namespace stilab::encoders
