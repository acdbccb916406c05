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

// Training loop, AdamW step, few-shot fine-tuning and checkpoints.

#ifndef STILAB_TRAINER_H_
#define STILAB_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stilab/encoders.h"
#include "stilab/grad.h"
#include "stilab/objective.h"
#include "stilab/sti.h"

namespace stilab::trainer {

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.05;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  sti::Toggles toggles;
  std::size_t num_attributes = 8;
  double tau_saliency = sti::kDefaultSaliencyTemperature;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;
  // Learning rate and batch size sized for the synthetic corpus.
  static TrainConfig DeskScale();
  sti::StiConfig Sti() const { return {tau_saliency, toggles}; }
};

struct OptimizerState {
  std::map<std::string, Tensor, std::less<>> first_moment;
  std::map<std::string, Tensor, std::less<>> second_moment;
  std::uint64_t step = 0;

  static OptimizerState ZerosLike(const grad::ParameterStore &params);
};

// Decoupled decay then a bias-corrected Adam update, for every parameter.
// Throws kNonFinite naming the parameter before touching anything.
void OptimizerStep(grad::ParameterStore &params, const grad::GradientMap &grads,
                   OptimizerState &state, const TrainConfig &config);

// labels[i] indexes classes.
struct LabeledSet {
  std::vector<const Tensor *> videos;
  std::vector<std::size_t> labels;
  std::vector<const encoders::TextEmbeddingSequence *> classes;

  std::size_t size() const { return videos.size(); }
  void Validate() const;
  LabeledSet Subset(const std::vector<std::size_t> &indices) const;
};

struct TrainState {
  objective::Model model;
  OptimizerState optimizer;
  TrainConfig config;
  std::size_t epoch = 0;  // completed epochs
  std::vector<double> loss_history;  // mean batch loss per epoch

  static TrainState Initialize(std::size_t dim, const TrainConfig &config);
};

// One optimizer step on a batch; returns the loss.
double TrainStep(TrainState &state, const LabeledSet &data,
                 const std::vector<std::size_t> &batch);

// Runs epochs state.epoch .. until_epoch-1. Epoch e shuffles with
// MixSeed(seed, e), so stopping and resuming reproduces a straight run.
void Fit(TrainState &state, const LabeledSet &data, std::size_t until_epoch);
void Fit(TrainState &state, const LabeledSet &data);

struct FewShotSample {
  std::vector<std::size_t> indices;  // into the source set, grouped by class
  std::vector<std::size_t> per_class;
  bool shortfall = false;
};

FewShotSample SampleFewShot(const LabeledSet &data, std::size_t shots,
                            std::uint64_t seed);

struct FewShotResult {
  TrainState state;
  FewShotSample sample;
};

// Fresh optimizer on `shots` videos per class, starting from `init`.
FewShotResult FewShotFinetune(const objective::Model &init,
                              const LabeledSet &data, std::size_t shots,
                              std::size_t epochs, std::uint64_t seed,
                              TrainConfig base);

// Checkpoint container:
//   "STICKPT1\n" "version 1\n" "config k=v ...\n" "epoch e\n" "step s\n"
//   "params n\n" n x "param <name> <rank> <dims...>\n" "history h\n"
//   "payload <count>\n" then binary64 LE: per parameter value, m, v;
//   then the loss history.
inline constexpr char kCheckpointMagic[] = "STICKPT1\n";
inline constexpr int kCheckpointVersion = 1;

void SaveCheckpoint(const std::filesystem::path &path, const TrainState &state);
TrainState LoadCheckpoint(const std::filesystem::path &path);

// "epoch,mean_loss" with 1-based epochs.
void WriteLossCsv(const std::filesystem::path &path,
                  const std::vector<double> &history);

}  // namespace stilab::trainer

#endif  // STILAB_TRAINER_H_
