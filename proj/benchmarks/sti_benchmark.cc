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

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "stilab/objective.h"
#include "stilab/random.h"
#include "stilab/trainer.h"

namespace {

using namespace stilab;

Tensor Gaussian(Rng &rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double &v : t.data()) v = rng.Normal();
  return t;
}

encoders::TextEmbeddingSequence Text(Rng &rng, std::size_t words, std::size_t d) {
  encoders::TextEmbeddingSequence t;
  t.word_embeddings = Gaussian(rng, Shape{words, d});
  t.class_embedding = Gaussian(rng, Shape{d});
  t.token_texts.assign(words, "w");
  return t;
}

// Args: frames, patches, dim.
void BM_ClassScore(benchmark::State &state) {
  const std::size_t T = state.range(0), P = state.range(1), D = state.range(2);
  Rng rng(1);
  const auto frames = encoders::EncodeVideo(Gaussian(rng, Shape{T, P, D}),
                                            Tensor::Identity(D), Tensor(Shape{D}));
  const auto text = Text(rng, 8, D);
  const sti::STIParameters params{Tensor::Identity(D), Tensor::Identity(D), 0.5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(objective::ClassScore(frames, text, params));
  }
}
BENCHMARK(BM_ClassScore)->Args({8, 16, 32})->Args({8, 49, 64})->Args({16, 49, 128});

// Forward and backward of the full loss on a B x B batch. Args: batch, dim.
void BM_LossGradient(benchmark::State &state) {
  const std::size_t B = state.range(0), D = state.range(1);
  Rng rng(2);
  objective::Model model = objective::Model::Create(D);
  std::vector<Tensor> raw;
  std::vector<encoders::TextEmbeddingSequence> texts;
  for (std::size_t i = 0; i < B; ++i) {
    raw.push_back(Gaussian(rng, Shape{8, 9, D}));
    texts.push_back(Text(rng, 8, D));
  }
  std::vector<const Tensor *> videos;
  std::vector<const encoders::TextEmbeddingSequence *> cols;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < B; ++i) {
    videos.push_back(&raw[i]);
    cols.push_back(&texts[i]);
    labels.push_back(i);
  }
  const auto positives = objective::PositiveSet::FromLabels(labels);
  for (auto _ : state) {
    grad::Tape tape(&model.params);
    const grad::Var s = objective::ScoreMatrix(tape, videos, cols, model.sti);
    const grad::Var loss = objective::TotalLoss(
        tape, s, positives, tape.Reciprocal(objective::Temperature(tape)));
    benchmark::DoNotOptimize(tape.Backward(loss));
  }
}
BENCHMARK(BM_LossGradient)->Args({4, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
