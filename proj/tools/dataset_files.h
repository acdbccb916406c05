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

// On-disk layout of a synthetic dataset directory:
//   descriptions.jsonl  class descriptions
//   videos.stiemb       raw videos, in dataset.json order
//   dataset.json        generator spec, vocabulary, classes, video ids

#ifndef STILAB_TOOLS_DATASET_FILES_H_
#define STILAB_TOOLS_DATASET_FILES_H_

#include <filesystem>
#include <vector>

#include "stilab/corpus.h"

namespace stilab::cli {

inline constexpr char kDescriptionsFile[] = "descriptions.jsonl";
inline constexpr char kVideosFile[] = "videos.stiemb";
inline constexpr char kDatasetFile[] = "dataset.json";

// Returns the written paths.
std::vector<std::filesystem::path> SaveDataset(
    const std::filesystem::path &dir, const corpus::SyntheticCorpus &corpus);

// Rebuilds everything except patch sources.
corpus::SyntheticCorpus LoadDataset(const std::filesystem::path &dir);

std::vector<std::filesystem::path> DatasetFiles(
    const std::filesystem::path &dir);

}  // namespace stilab::cli

#endif  // STILAB_TOOLS_DATASET_FILES_H_
