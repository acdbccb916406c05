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

// Desk-scale stand-ins for the two encoders.
//
// Text side: a frozen hash-embedding table. Every token maps to a fixed unit
// vector derived from (token, table seed); the sentence embedding is the
// normalized mean of its token vectors.
//
// Video side: one trainable affine map applied to every patch. The per-frame
// representation is the mean of that frame's encoded patches.

#ifndef STILAB_ENCODERS_H_
#define STILAB_ENCODERS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stilab/grad.h"
#include "stilab/tensor.h"

namespace stilab::encoders {

// Lowercases ASCII and splits on whitespace and ASCII punctuation. Bytes
// >= 0x80 are kept inside tokens.
std::vector<std::string> Tokenize(std::string_view sentence);

struct TextEmbeddingSequence {
  Tensor class_embedding;  // D
  Tensor word_embeddings;  // N_w x D
  std::vector<std::string> token_texts;

  std::size_t num_words() const { return token_texts.size(); }
  std::size_t dim() const { return class_embedding.size(); }
};

struct FrameEmbeddingSet {
  Tensor frame_class_embeddings;  // T x D
  Tensor patch_embeddings;        // T x N_p x D

  std::size_t num_frames() const { return patch_embeddings.dim(0); }
  std::size_t num_patches() const { return patch_embeddings.dim(1); }
  std::size_t dim() const { return patch_embeddings.dim(2); }
};

class TextEncoder {
 public:
  TextEncoder(std::uint64_t table_seed, std::size_t dim);

  std::uint64_t table_seed() const { return table_seed_; }
  std::size_t dim() const { return dim_; }

  // Unit-norm vector for one token; identical on every call.
  Tensor TokenEmbedding(std::string_view token) const;
  // Throws on an empty token sequence.
  TextEmbeddingSequence Encode(std::span<const std::string> tokens) const;
  TextEmbeddingSequence EncodeSentence(std::string_view sentence) const;

 private:
  std::uint64_t table_seed_;
  std::size_t dim_;
};

inline constexpr std::string_view kVideoMix = "video.mix";
inline constexpr std::string_view kVideoBias = "video.bias";

// Registers the video-side map as identity with zero bias.
void RegisterVideoEncoder(grad::ParameterStore &params, std::size_t dim);

// Encoded video on a tape: patches as a (T*N_p) x D matrix and frames as
// T x D.
struct VideoNodes {
  grad::Var patches;
  grad::Var frames;
  std::size_t num_frames = 0;
  std::size_t num_patches = 0;
};

// `raw` is T x N_p x D. Reads kVideoMix / kVideoBias from the tape's store.
VideoNodes EncodeVideo(grad::Tape &tape, const Tensor &raw);

// Value-level encoding with explicit weights.
FrameEmbeddingSet EncodeVideo(const Tensor &raw, const Tensor &mix,
                              const Tensor &bias);

}  // namespace stilab::encoders

#endif  // STILAB_ENCODERS_H_
