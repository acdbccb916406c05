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

#include "dataset_files.h"

#include <fstream>

#include "json.hpp"
#include "stilab/embedding_io.h"
#include "stilab/encoders.h"
#include "stilab/error.h"

namespace stilab::cli {

using nlohmann::json;

std::vector<std::filesystem::path> DatasetFiles(
    const std::filesystem::path &dir) {
  return {dir / kDescriptionsFile, dir / kVideosFile, dir / kDatasetFile};
}

std::vector<std::filesystem::path> SaveDataset(
    const std::filesystem::path &dir, const corpus::SyntheticCorpus &corpus) {
  const auto files = DatasetFiles(dir);
  attributes::WriteDescriptionCorpus(files[0], corpus.descriptions);

  io::EmbeddingContainer container;
  for (const auto &v : corpus.videos) container.raw_videos.push_back(v.raw);
  io::SaveEmbeddings(files[1], container);

  const auto &s = corpus.spec;
  json j;
  j["format"] = "stilab-dataset-1";
  j["spec"] = {{"num_concepts", s.num_concepts},
               {"seen_classes", s.seen_classes},
               {"unseen_classes", s.unseen_classes},
               {"videos_per_class", s.videos_per_class},
               {"num_frames", s.num_frames},
               {"num_patches", s.num_patches},
               {"dim", s.dim},
               {"noise_scale", s.noise_scale},
               {"seed", s.seed},
               {"text_table_seed", s.text_table_seed},
               {"num_distractors", s.num_distractors},
               {"background_concept_patches", s.background_concept_patches}};
  j["concept_words"] = corpus.concept_words;
  j["distractor_words"] = corpus.distractor_words;
  j["classes"] = json::array();
  for (const auto &c : corpus.classes) {
    j["classes"].push_back(
        {{"name", c.name}, {"concepts", c.concepts}, {"seen", c.seen}});
  }
  j["videos"] = json::array();
  for (const auto &v : corpus.videos) {
    j["videos"].push_back({{"id", v.id}, {"label", v.label}});
  }
  std::ofstream out(files[2], std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write '" + files[2].string() + "'");
  }
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + files[2].string());
  return files;
}

corpus::SyntheticCorpus LoadDataset(const std::filesystem::path &dir) {
  const auto files = DatasetFiles(dir);
  std::ifstream in(files[2]);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open '" + files[2].string() + "'");
  }
  corpus::SyntheticCorpus c;
  try {
    const json j = json::parse(in);
    const json &s = j.at("spec");
    c.spec.num_concepts = s.at("num_concepts");
    c.spec.seen_classes = s.at("seen_classes");
    c.spec.unseen_classes = s.at("unseen_classes");
    c.spec.videos_per_class = s.at("videos_per_class");
    c.spec.num_frames = s.at("num_frames");
    c.spec.num_patches = s.at("num_patches");
    c.spec.dim = s.at("dim");
    c.spec.noise_scale = s.at("noise_scale");
    c.spec.seed = s.at("seed");
    c.spec.text_table_seed = s.at("text_table_seed");
    c.spec.num_distractors = s.at("num_distractors");
    c.spec.background_concept_patches = s.at("background_concept_patches");
    c.concept_words = j.at("concept_words").get<std::vector<std::string>>();
    c.distractor_words =
        j.at("distractor_words").get<std::vector<std::string>>();
    for (const auto &jc : j.at("classes")) {
      corpus::SyntheticClass cls;
      cls.name = jc.at("name");
      cls.concepts = jc.at("concepts").get<std::vector<std::size_t>>();
      cls.seen = jc.at("seen");
      c.classes.push_back(std::move(cls));
    }
    for (const auto &jv : j.at("videos")) {
      corpus::Video v;
      v.id = jv.at("id");
      v.label = jv.at("label");
      if (v.label >= c.classes.size()) {
        throw Error(ErrorCode::kParse, "video '" + v.id + "' has bad label");
      }
      c.videos.push_back(std::move(v));
    }
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kParse, files[2].string() + ": " + e.what());
  }

  const encoders::TextEncoder text(c.spec.text_table_seed, c.spec.dim);
  for (const auto &w : c.concept_words) {
    c.concept_vectors.push_back(text.TokenEmbedding(w));
  }
  for (const auto &w : c.distractor_words) {
    c.distractor_vectors.push_back(text.TokenEmbedding(w));
  }

  const attributes::DescriptionCorpus descriptions =
      attributes::LoadDescriptionCorpus(files[0]);
  for (const auto &cls : c.classes) {
    auto it = descriptions.find(cls.name);
    if (it == descriptions.end()) {
      throw Error(ErrorCode::kNotFound,
                  "no description for class '" + cls.name + "'");
    }
    c.descriptions.push_back(it->second);
  }

  io::EmbeddingContainer container = io::LoadEmbeddings(files[1]);
  if (container.raw_videos.size() != c.videos.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(container.raw_videos.size()) +
                    " stored videos, dataset lists " +
                    std::to_string(c.videos.size()));
  }
  for (std::size_t i = 0; i < c.videos.size(); ++i) {
    c.videos[i].raw = std::move(container.raw_videos[i]);
  }
  return c;
}

}  // namespace stilab::cli
