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

#include "stilab/embedding_io.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "stilab/error.h"

namespace stilab::io {
namespace {

std::uint64_t ToLittleEndian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

// Reads one '\n'-terminated header line.
std::string ReadLine(const std::vector<char> &bytes, std::size_t &offset) {
  std::size_t end = offset;
  while (end < bytes.size() && bytes[end] != '\n') ++end;
  if (end >= bytes.size()) {
    throw Error(ErrorCode::kTruncated, "missing header line");
  }
  std::string line(bytes.data() + offset, end - offset);
  offset = end + 1;
  return line;
}

std::size_t ParseCount(std::istringstream &in, const std::string &line) {
  long long v = -1;
  if (!(in >> v) || v < 0) {
    throw Error(ErrorCode::kParse, "bad header '" + line + "'");
  }
  return static_cast<std::size_t>(v);
}

void WriteHeader(std::vector<char> &out, const std::string &line) {
  out.insert(out.end(), line.begin(), line.end());
  out.push_back('\n');
}

}  // namespace

void AppendDoubles(std::vector<char> &out, std::span<const double> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits =
        ToLittleEndian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(out.data() + start + i * 8, &bits, 8);
  }
}

std::vector<double> ReadDoubles(const std::vector<char> &bytes,
                                std::size_t &offset, std::size_t count) {
  if (bytes.size() < offset || (bytes.size() - offset) / 8 < count) {
    throw Error(ErrorCode::kTruncated,
                "expected " + std::to_string(count) + " values, " +
                    std::to_string((bytes.size() - offset) / 8) + " remain");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + offset + i * 8, 8);
    out[i] = std::bit_cast<double>(ToLittleEndian(bits));
  }
  offset += count * 8;
  return out;
}

std::vector<char> ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

void WriteFileBytes(const std::filesystem::path &path,
                    const std::vector<char> &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void SaveEmbeddings(const std::filesystem::path &path,
                    const EmbeddingContainer &container) {
  std::vector<char> out;
  WriteHeader(out, std::string(kEmbeddingMagic, sizeof(kEmbeddingMagic) - 2));
  const std::size_t n = container.frames.size() + container.texts.size() +
                        container.raw_videos.size();
  WriteHeader(out, "records " + std::to_string(n));

  auto require_finite = [](const Tensor &t, const char *what) {
    if (!t.AllFinite()) {
      throw Error(ErrorCode::kNonFinite, std::string(what) +
                                             " contains non-finite values");
    }
  };

  for (const auto &f : container.frames) {
    const std::size_t T = f.num_frames(), P = f.num_patches(), D = f.dim();
    if (f.frame_class_embeddings.shape() != Shape{T, D}) {
      throw Error(ErrorCode::kShapeMismatch, "frame embeddings " +
                      ShapeString(f.frame_class_embeddings.shape()));
    }
    require_finite(f.frame_class_embeddings, "frame embeddings");
    require_finite(f.patch_embeddings, "patch embeddings");
    WriteHeader(out, "frames " + std::to_string(T) + " " + std::to_string(P) +
                         " " + std::to_string(D));
    AppendDoubles(out, f.frame_class_embeddings.data());
    AppendDoubles(out, f.patch_embeddings.data());
  }
  for (const auto &raw : container.raw_videos) {
    if (raw.rank() != 3) {
      throw Error(ErrorCode::kShapeMismatch,
                  "raw video " + ShapeString(raw.shape()));
    }
    require_finite(raw, "raw video");
    WriteHeader(out, "raw " + std::to_string(raw.dim(0)) + " " +
                         std::to_string(raw.dim(1)) + " " +
                         std::to_string(raw.dim(2)));
    AppendDoubles(out, raw.data());
  }
  for (const auto &t : container.texts) {
    require_finite(t.class_embedding, "class embedding");
    require_finite(t.word_embeddings, "word embeddings");
    std::string header = "text " + std::to_string(t.num_words()) + " " +
                         std::to_string(t.dim());
    for (const auto &tok : t.token_texts) {
      if (tok.empty() || tok.find_first_of(" \n") != std::string::npos) {
        throw Error(ErrorCode::kInvalidArgument,
                    "token '" + tok + "' cannot be stored");
      }
      header += " " + tok;
    }
    WriteHeader(out, header);
    AppendDoubles(out, t.class_embedding.data());
    AppendDoubles(out, t.word_embeddings.data());
  }
  WriteFileBytes(path, out);
}

EmbeddingContainer LoadEmbeddings(const std::filesystem::path &path) {
  const std::vector<char> bytes = ReadFileBytes(path);
  const std::size_t magic_len = sizeof(kEmbeddingMagic) - 1;
  if (bytes.size() < magic_len ||
      std::memcmp(bytes.data(), kEmbeddingMagic, magic_len) != 0) {
    throw Error(ErrorCode::kBadMagic, path.string());
  }
  std::size_t offset = magic_len;
  EmbeddingContainer out;

  const std::string count_line = ReadLine(bytes, offset);
  std::istringstream count_in(count_line);
  std::string tag;
  count_in >> tag;
  if (tag != "records") {
    throw Error(ErrorCode::kParse, "expected 'records', got '" + count_line + "'");
  }
  const std::size_t n = ParseCount(count_in, count_line);

  for (std::size_t r = 0; r < n; ++r) {
    const std::string line = ReadLine(bytes, offset);
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    if (kind == "frames" || kind == "raw") {
      const std::size_t T = ParseCount(in, line);
      const std::size_t P = ParseCount(in, line);
      const std::size_t D = ParseCount(in, line);
      if (kind == "frames") {
        encoders::FrameEmbeddingSet f;
        f.frame_class_embeddings =
            Tensor(Shape{T, D}, ReadDoubles(bytes, offset, T * D));
        f.patch_embeddings =
            Tensor(Shape{T, P, D}, ReadDoubles(bytes, offset, T * P * D));
        out.frames.push_back(std::move(f));
      } else {
        out.raw_videos.emplace_back(Shape{T, P, D},
                                    ReadDoubles(bytes, offset, T * P * D));
      }
    } else if (kind == "text") {
      const std::size_t words = ParseCount(in, line);
      const std::size_t D = ParseCount(in, line);
      encoders::TextEmbeddingSequence t;
      std::string tok;
      while (in >> tok) t.token_texts.push_back(tok);
      if (t.token_texts.size() != words) {
        throw Error(ErrorCode::kShapeMismatch,
                    "header declares " + std::to_string(words) +
                        " tokens but lists " +
                        std::to_string(t.token_texts.size()));
      }
      t.class_embedding = Tensor(Shape{D}, ReadDoubles(bytes, offset, D));
      t.word_embeddings =
          Tensor(Shape{words, D}, ReadDoubles(bytes, offset, words * D));
      out.texts.push_back(std::move(t));
    } else {
      throw Error(ErrorCode::kParse, "unknown record kind '" + kind + "'");
    }
  }
  if (offset != bytes.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(bytes.size() - offset) +
                    " trailing bytes after the declared records");
  }
  return out;
}

}  // namespace stilab::io
