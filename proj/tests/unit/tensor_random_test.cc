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

#include <cmath>
#include <set>

#include "stilab/random.h"
#include "stilab/tensor.h"
#include "test_util.h"

namespace stilab {
namespace {

TEST(Tensor, ConstructionAndAccess) {
  Tensor m = Tensor::Matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.shape(), (Shape{2, 3}));
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
  EXPECT_EQ(Tensor::Scalar(2.5).rank(), 0u);
  EXPECT_EQ(Tensor::Identity(3).at(2, 2), 1.0);
  EXPECT_EQ(Tensor::Identity(3).at(0, 2), 0.0);
  EXPECT_STILAB_ERROR(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}),
                      ErrorCode::kShapeMismatch);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor t(Shape{2, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  Tensor r = t.Reshaped(Shape{6, 4});
  EXPECT_EQ(r.at(5, 3), 23.0);
  EXPECT_EQ(t.at(1, 2, 3), 23.0);
  EXPECT_STILAB_ERROR(t.Reshaped(Shape{5, 5}), ErrorCode::kShapeMismatch);
}

TEST(Tensor, FinitenessAndBitwiseEquality) {
  Tensor a = Tensor::Vector({1.0, 2.0});
  Tensor b = Tensor::Vector({1.0, 2.0});
  EXPECT_TRUE(a.BitwiseEquals(b));
  b[1] = std::nextafter(2.0, 3.0);
  EXPECT_FALSE(a.BitwiseEquals(b));
  EXPECT_GT(MaxAbsDiff(a, b), 0.0);
  a[0] = std::nan("");
  EXPECT_FALSE(a.AllFinite());
}

TEST(Random, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.NextU64();
    EXPECT_EQ(x, b.NextU64());
    differs = differs || x != c.NextU64();
  }
  EXPECT_TRUE(differs);
}

TEST(Random, UniformIndexCoversRangeOnly) {
  Rng rng(7);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.UniformIndex(5);
    ASSERT_LT(v, 5u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
  for (int i = 0; i < 200; ++i) {
    const auto v = rng.UniformInt(2, 4);
    EXPECT_GE(v, 2u);
    EXPECT_LE(v, 4u);
  }
}

TEST(Random, NormalMomentsAreReasonable) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Random, ShuffleIsAPermutation) {
  Rng rng(3);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.Shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_EQ(*s.begin(), 0);
  EXPECT_EQ(*s.rbegin(), 49);
}

TEST(Random, HashAndMixAreStable) {
  // Reference values of FNV-1a 64.
  EXPECT_EQ(Fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_NE(MixSeed(1, 2), MixSeed(2, 1));
  EXPECT_EQ(MixSeed(5, 9), MixSeed(5, 9));
}

}  // namespace
}  // namespace stilab
