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

// Embedding container.
//
//   "STIEMB1\n"
//   "records <n>\n"
//   then per record one decimal header line and its payload:
//     "frames <T> <N_p> <D>\n"            T*D class rows, then T*N_p*D patches
//     "raw <T> <N_p> <D>\n"               T*N_p*D raw patch features
//     "text <N_w> <D> <tok_1> ... <tok_Nw>\n"   D class values, then N_w*D words
//   Payload values are IEEE-754 binary64, little-endian, row-major.

#ifndef STILAB_EMBEDDING_IO_H_
#define STILAB_EMBEDDING_IO_H_

#include <filesystem>
#include <span>
#include <vector>

#include "stilab/encoders.h"
#include "stilab/tensor.h"

namespace stilab::io {

inline constexpr char kEmbeddingMagic[] = "STIEMB1\n";

struct EmbeddingContainer {
  std::vector<encoders::FrameEmbeddingSet> frames;
  std::vector<encoders::TextEmbeddingSequence> texts;
  std::vector<Tensor> raw_videos;  // each T x N_p x D
};

void SaveEmbeddings(const std::filesystem::path &path,
                    const EmbeddingContainer &container);
EmbeddingContainer LoadEmbeddings(const std::filesystem::path &path);

// Little-endian binary64 helpers shared with the checkpoint format.
void AppendDoubles(std::vector<char> &out, std::span<const double> values);
// Reads `count` doubles starting at `offset`; throws kTruncated if short.
std::vector<double> ReadDoubles(const std::vector<char> &bytes,
                                std::size_t &offset, std::size_t count);

std::vector<char> ReadFileBytes(const std::filesystem::path &path);
void WriteFileBytes(const std::filesystem::path &path,
                    const std::vector<char> &bytes);

}  // namespace stilab::io

#endif  // STILAB_EMBEDDING_IO_H_
