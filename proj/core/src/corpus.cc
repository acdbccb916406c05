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

#include "stilab/corpus.h"

#include <algorithm>
#include <set>

#include "stilab/error.h"
#include "stilab/random.h"

namespace stilab::corpus {
namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

// Pronounceable made-up word of 2-3 consonant-vowel syllables.
std::string MakeWord(Rng &rng) {
  std::string w;
  const std::size_t syllables = rng.UniformInt(2, 3);
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[rng.UniformIndex(kConsonants.size())]);
    w.push_back(kVowels[rng.UniformIndex(kVowels.size())]);
  }
  if (rng.Uniform() < 0.5) {
    w.push_back(kConsonants[rng.UniformIndex(kConsonants.size())]);
  }
  return w;
}

std::vector<std::string> MakeUniqueWords(Rng &rng, std::size_t count,
                                         std::set<std::string> &taken) {
  const auto &stopwords = attributes::StopwordSet::Default();
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w = MakeWord(rng);
    if (stopwords.Contains(w) || !taken.insert(w).second) continue;
    out.push_back(std::move(w));
  }
  return out;
}

bool IsSubset(const std::vector<std::size_t> &a,
              const std::vector<std::size_t> &b) {
  // Both sorted.
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::string JoinList(const std::vector<std::string> &words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) s += (i + 1 == words.size()) ? " and " : ", ";
    s += words[i];
  }
  return s;
}

std::string Describe(Rng &rng, const std::string &name,
                     const std::vector<std::string> &concepts) {
  std::vector<std::string> reordered = concepts;
  std::rotate(reordered.begin(), reordered.begin() + 1, reordered.end());
  switch (rng.UniformIndex(3)) {
    case 0:
      return name + " is an activity involving " + JoinList(concepts) +
             ". Performers use " + JoinList(reordered) +
             " throughout the motion.";
    case 1:
      return name + " is a sport where a person handles " +
             JoinList(concepts) + ". Typically " + JoinList(reordered) +
             " appear together.";
    default:
      return name + " describes an exercise with " + JoinList(concepts) +
             ". Athletes combine " + JoinList(reordered) +
             " in one sequence.";
  }
}

}  // namespace

void SyntheticCorpusSpec::Validate() const {
  auto positive = [](std::size_t v, const char *name) {
    if (v < 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(name) + " must be >= 1");
    }
  };
  positive(num_concepts, "num_concepts");
  positive(seen_classes, "seen_classes");
  positive(videos_per_class, "videos_per_class");
  positive(num_frames, "T");
  positive(num_patches, "N_p");
  positive(dim, "D");
  positive(num_distractors, "num_distractors");
  if (!(noise_scale >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_scale must be >= 0");
  }
  if (num_concepts < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "num_concepts must be >= 2 (classes use 2-4 concepts)");
  }
}

std::vector<std::size_t> SyntheticCorpus::SeenClassIndices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].seen) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SyntheticCorpus::UnseenClassIndices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!classes[i].seen) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SyntheticCorpus::VideosOfClasses(
    std::span<const std::size_t> class_indices) const {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    if (std::find(class_indices.begin(), class_indices.end(),
                  videos[v].label) != class_indices.end()) {
      out.push_back(v);
    }
  }
  return out;
}

SyntheticCorpus GenerateSyntheticCorpus(const SyntheticCorpusSpec &spec) {
  spec.Validate();
  SyntheticCorpus corpus;
  corpus.spec = spec;
  Rng rng(MixSeed(spec.seed, 0x5e7c0));
  const encoders::TextEncoder text(spec.text_table_seed, spec.dim);

  std::set<std::string> taken;
  corpus.concept_words = MakeUniqueWords(rng, spec.num_concepts, taken);
  corpus.distractor_words = MakeUniqueWords(rng, spec.num_distractors, taken);
  for (const auto &w : corpus.concept_words) {
    corpus.concept_vectors.push_back(text.TokenEmbedding(w));
  }
  for (const auto &w : corpus.distractor_words) {
    corpus.distractor_vectors.push_back(text.TokenEmbedding(w));
  }

  // Concept sets. Unseen classes draw only from concepts some seen class
  // uses. No set may contain another, so every class stays identifiable.
  const std::size_t total = spec.seen_classes + spec.unseen_classes;
  std::vector<std::vector<std::size_t>> sets;
  std::set<std::size_t> seen_pool;
  for (std::size_t c = 0; c < total; ++c) {
    const bool seen = c < spec.seen_classes;
    std::vector<std::size_t> pool;
    if (seen) {
      for (std::size_t k = 0; k < spec.num_concepts; ++k) pool.push_back(k);
    } else {
      pool.assign(seen_pool.begin(), seen_pool.end());
    }
    const std::size_t hi = std::min<std::size_t>(4, pool.size());
    if (pool.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "too few concepts to build class " + std::to_string(c));
    }
    std::vector<std::size_t> chosen;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      std::vector<std::size_t> shuffled = pool;
      rng.Shuffle(shuffled);
      const std::size_t count = rng.UniformInt(2, hi);
      chosen.assign(shuffled.begin(), shuffled.begin() + count);
      std::vector<std::size_t> sorted = chosen;
      std::sort(sorted.begin(), sorted.end());
      ok = true;
      for (const auto &other : sets) {
        std::vector<std::size_t> o = other;
        std::sort(o.begin(), o.end());
        if (IsSubset(sorted, o) || IsSubset(o, sorted)) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cannot draw distinct concept sets; raise num_concepts");
    }
    if (seen) seen_pool.insert(chosen.begin(), chosen.end());
    sets.push_back(chosen);
  }

  const auto qualifiers = MakeUniqueWords(rng, total, taken);
  for (std::size_t c = 0; c < total; ++c) {
    SyntheticClass cls;
    cls.concepts = sets[c];
    cls.seen = c < spec.seen_classes;
    cls.name = corpus.concept_words[cls.concepts[0]] + " " + qualifiers[c];
    std::vector<std::string> words;
    for (std::size_t k : cls.concepts) words.push_back(corpus.concept_words[k]);
    attributes::ClassDescription d;
    d.class_name = cls.name;
    d.description = Describe(rng, cls.name, words);
    d.source_tag = "synthetic:seed=" + std::to_string(spec.seed);
    corpus.descriptions.push_back(std::move(d));
    corpus.classes.push_back(std::move(cls));
  }

  const std::size_t T = spec.num_frames, P = spec.num_patches, D = spec.dim;
  const std::size_t window = std::max<std::size_t>(1, T / 2);
  const std::size_t dense_lo = std::max<std::size_t>(1, P / 4);
  const std::size_t dense_hi = std::max<std::size_t>(1, P / 2);
  for (std::size_t c = 0; c < total; ++c) {
    const auto &cls = corpus.classes[c];
    for (std::size_t n = 0; n < spec.videos_per_class; ++n) {
      Video video;
      video.id = "c" + std::to_string(c) + "_v" + std::to_string(n);
      video.label = c;
      video.raw = Tensor(Shape{T, P, D});
      PatchSources sources(T * P);
      const std::size_t start = rng.UniformIndex(T - window + 1);
      for (std::size_t t = 0; t < T; ++t) {
        const bool dense = t >= start && t < start + window;
        const std::size_t with_concept =
            dense ? rng.UniformInt(dense_lo, dense_hi)
                : std::min(P, spec.background_concept_patches);
        std::vector<std::size_t> order(P);
        for (std::size_t k = 0; k < P; ++k) order[k] = k;
        rng.Shuffle(order);
        for (std::size_t j = 0; j < P; ++j) {
          const std::size_t k = order[j];
          const Tensor *base;
          if (j < with_concept) {
            const std::size_t concept_idx =
                cls.concepts[rng.UniformIndex(cls.concepts.size())];
            base = &corpus.concept_vectors[concept_idx];
            sources[t * P + k] = static_cast<int>(concept_idx);
          } else {
            const std::size_t d = rng.UniformIndex(spec.num_distractors);
            base = &corpus.distractor_vectors[d];
            sources[t * P + k] = -1 - static_cast<int>(d);
          }
          for (std::size_t i = 0; i < D; ++i) {
            double v = (*base)[i];
            if (spec.noise_scale > 0.0) v += spec.noise_scale * rng.Normal();
            video.raw.at(t, k, i) = v;
          }
        }
      }
      corpus.videos.push_back(std::move(video));
      corpus.patch_sources.push_back(std::move(sources));
    }
  }
  return corpus;
}

ClassTexts BuildClassTexts(
    std::span<const attributes::ClassDescription> descriptions,
    std::size_t num_attributes,
    const attributes::ExtractionClientConfig &extractor,
    const attributes::StopwordSet &stopwords,
    const encoders::TextEncoder &text_encoder) {
  ClassTexts out;
  for (const auto &d : descriptions) {
    auto record = attributes::BuildAttributeRecord(d, num_attributes,
                                                   extractor, stopwords);
    out.embeddings.push_back(text_encoder.EncodeSentence(record.prompt_sentence));
    out.records.push_back(std::move(record));
  }
  return out;
}

}  // namespace stilab::corpus
