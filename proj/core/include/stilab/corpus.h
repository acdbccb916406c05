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

// Synthetic zero-shot corpus.
//
// Concepts are made-up words. Each concept's latent visual vector is the
// frozen text embedding of its word, which plays the role of a pretrained,
// already-aligned vision-language space. Classes combine 2-4 concepts; unseen
// classes reuse concepts that appear in seen classes, so describing a class
// by its concept words (its attributes) is what makes zero-shot transfer
// possible. A class name carries only one of its concepts plus a
// class-specific qualifier word.
//
// Every frame carries at least one patch of a class concept. A contiguous
// window of frames carries many; the remaining patches show distractor
// vectors shared by all classes.

#ifndef STILAB_CORPUS_H_
#define STILAB_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stilab/attributes.h"
#include "stilab/encoders.h"
#include "stilab/tensor.h"

namespace stilab::corpus {

struct SyntheticCorpusSpec {
  std::size_t num_concepts = 24;
  std::size_t seen_classes = 8;
  std::size_t unseen_classes = 4;
  std::size_t videos_per_class = 20;
  std::size_t num_frames = 8;
  std::size_t num_patches = 16;
  std::size_t dim = 32;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
  // Must match the text encoder used downstream.
  std::uint64_t text_table_seed = 0;
  std::size_t num_distractors = 8;
  // Concept patches per frame outside the action window.
  std::size_t background_concept_patches = 1;

  void Validate() const;
};

struct Video {
  std::string id;
  std::size_t label = 0;
  Tensor raw;  // T x N_p x D
};

struct SyntheticClass {
  std::string name;
  std::vector<std::size_t> concepts;
  bool seen = true;
};

// Patch source: concept index (>= 0), or -(1 + distractor index).
using PatchSources = std::vector<int>;

struct SyntheticCorpus {
  SyntheticCorpusSpec spec;
  std::vector<std::string> concept_words;
  std::vector<Tensor> concept_vectors;
  std::vector<std::string> distractor_words;
  std::vector<Tensor> distractor_vectors;
  std::vector<SyntheticClass> classes;
  std::vector<attributes::ClassDescription> descriptions;  // class order
  std::vector<Video> videos;
  std::vector<PatchSources> patch_sources;  // per video, T*N_p entries

  std::vector<std::size_t> SeenClassIndices() const;
  std::vector<std::size_t> UnseenClassIndices() const;
  // Indices into `videos`.
  std::vector<std::size_t> VideosOfClasses(
      std::span<const std::size_t> class_indices) const;
};

SyntheticCorpus GenerateSyntheticCorpus(const SyntheticCorpusSpec &spec);

// Attribute sentences and their text embeddings for a list of classes.
struct ClassTexts {
  std::vector<attributes::AttributeRecord> records;
  std::vector<encoders::TextEmbeddingSequence> embeddings;
};

ClassTexts BuildClassTexts(
    std::span<const attributes::ClassDescription> descriptions,
    std::size_t num_attributes,
    const attributes::ExtractionClientConfig &extractor,
    const attributes::StopwordSet &stopwords,
    const encoders::TextEncoder &text_encoder);

}  // namespace stilab::corpus

#endif  // STILAB_CORPUS_H_
