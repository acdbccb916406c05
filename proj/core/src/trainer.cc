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

#include "stilab/trainer.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stilab/error.h"
#include "stilab/random.h"

namespace stilab::trainer {

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "learning_rate must be >= 0");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw Error(ErrorCode::kInvalidArgument, "weight_decay must be >= 0");
  }
  if (epochs < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  }
  if (batch_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must be > 0");
  }
  Sti().Validate();
}

TrainConfig TrainConfig::DeskScale() {
  TrainConfig c;
  c.learning_rate = 2e-4;
  c.batch_size = 16;
  return c;
}

OptimizerState OptimizerState::ZerosLike(const grad::ParameterStore &params) {
  OptimizerState s;
  for (const auto &name : params.names()) {
    const Shape &shape = params.Get(name).shape();
    s.first_moment.emplace(name, Tensor(shape));
    s.second_moment.emplace(name, Tensor(shape));
  }
  return s;
}

void OptimizerStep(grad::ParameterStore &params, const grad::GradientMap &grads,
                   OptimizerState &state, const TrainConfig &config) {
  for (const auto &name : params.names()) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      throw Error(ErrorCode::kNotFound, "no gradient for '" + name + "'");
    }
    if (it->second.shape() != params.Get(name).shape()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "gradient for '" + name + "' is " +
                      ShapeString(it->second.shape()));
    }
    if (!it->second.AllFinite()) {
      throw Error(ErrorCode::kNonFinite,
                  "non-finite gradient for '" + name + "'");
    }
    if (!state.first_moment.count(name) || !state.second_moment.count(name)) {
      throw Error(ErrorCode::kNotFound,
                  "optimizer state lacks '" + name + "'");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;
  const double decay = 1.0 - lr * config.weight_decay;

  for (const auto &name : params.names()) {
    const Tensor &g = grads.find(name)->second;
    Tensor &theta = params.Mutable(name);
    Tensor &m = state.first_moment.find(name)->second;
    Tensor &v = state.second_moment.find(name)->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] *= decay;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void LabeledSet::Validate() const {
  if (videos.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty dataset");
  }
  if (labels.size() != videos.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(videos.size()) + " videos but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label " + std::to_string(labels[i]) + " of video " +
                      std::to_string(i) + " is outside " +
                      std::to_string(classes.size()) + " classes");
    }
  }
}

LabeledSet LabeledSet::Subset(const std::vector<std::size_t> &indices) const {
  LabeledSet out;
  out.classes = classes;
  for (std::size_t i : indices) {
    out.videos.push_back(videos.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

TrainState TrainState::Initialize(std::size_t dim, const TrainConfig &config) {
  config.Validate();
  TrainState s;
  s.config = config;
  s.model = objective::Model::Create(dim, config.Sti());
  s.optimizer = OptimizerState::ZerosLike(s.model.params);
  return s;
}

double TrainStep(TrainState &state, const LabeledSet &data,
                 const std::vector<std::size_t> &batch) {
  std::vector<const Tensor *> videos;
  std::vector<const encoders::TextEmbeddingSequence *> columns;
  std::vector<std::size_t> labels;
  for (std::size_t i : batch) {
    videos.push_back(data.videos[i]);
    labels.push_back(data.labels[i]);
    columns.push_back(data.classes[data.labels[i]]);
  }
  grad::Tape tape(&state.model.params);
  const grad::Var scores =
      objective::ScoreMatrix(tape, videos, columns, state.model.sti);
  const grad::Var inv_tau = tape.Reciprocal(objective::Temperature(tape));
  const grad::Var loss = objective::TotalLoss(
      tape, scores, objective::PositiveSet::FromLabels(labels), inv_tau);
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kNonFinite,
                "loss is " + std::to_string(value) + " at epoch " +
                    std::to_string(state.epoch) + ", optimizer step " +
                    std::to_string(state.optimizer.step));
  }
  grad::GradientMap grads = tape.Backward(loss);
  OptimizerStep(state.model.params, grads, state.optimizer, state.config);
  return value;
}

void Fit(TrainState &state, const LabeledSet &data, std::size_t until_epoch) {
  state.config.Validate();
  data.Validate();
  state.model.sti = state.config.Sti();
  const std::size_t n = data.size();
  const std::size_t bs = state.config.batch_size;
  for (; state.epoch < until_epoch; ++state.epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(MixSeed(state.config.seed, state.epoch));
    rng.Shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      total += TrainStep(state, data, batch);
      ++batches;
    }
    state.loss_history.push_back(total / static_cast<double>(batches));
  }
}

void Fit(TrainState &state, const LabeledSet &data) {
  Fit(state, data, state.config.epochs);
}

FewShotSample SampleFewShot(const LabeledSet &data, std::size_t shots,
                            std::uint64_t seed) {
  data.Validate();
  if (shots < 1) {
    throw Error(ErrorCode::kInvalidArgument, "shots must be >= 1");
  }
  std::vector<std::vector<std::size_t>> by_class(data.classes.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }
  FewShotSample out;
  Rng rng(MixSeed(seed, shots));
  for (auto &members : by_class) {
    rng.Shuffle(members);
    const std::size_t take = std::min(shots, members.size());
    if (take < shots) out.shortfall = true;
    out.per_class.push_back(take);
    out.indices.insert(out.indices.end(), members.begin(),
                       members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

FewShotResult FewShotFinetune(const objective::Model &init,
                              const LabeledSet &data, std::size_t shots,
                              std::size_t epochs, std::uint64_t seed,
                              TrainConfig base) {
  FewShotResult out;
  out.sample = SampleFewShot(data, shots, seed);
  base.epochs = epochs;
  base.seed = seed;
  base.Validate();
  out.state.config = base;
  out.state.model = init;
  out.state.model.sti = base.Sti();
  out.state.optimizer = OptimizerState::ZerosLike(init.params);
  Fit(out.state, data.Subset(out.sample.indices));
  return out;
}

void WriteLossCsv(const std::filesystem::path &path,
                  const std::vector<double> &history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%.17g", history[e]);
    out << (e + 1) << ',' << buf << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace stilab::trainer
