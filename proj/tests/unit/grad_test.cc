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

#include "stilab/grad.h"
#include "test_util.h"

namespace stilab::grad {
namespace {

using stilab::testing::RandomTensor;

TEST(ParameterStore, RegisterGetSet) {
  ParameterStore p;
  p.Register("w", Tensor::Vector({1, 2}));
  EXPECT_TRUE(p.Contains("w"));
  EXPECT_FALSE(p.Contains("v"));
  EXPECT_STILAB_ERROR(p.Register("w", Tensor::Scalar(0)), ErrorCode::kDuplicate);
  EXPECT_STILAB_ERROR(p.Get("v"), ErrorCode::kNotFound);
  EXPECT_STILAB_ERROR(p.Set("w", Tensor::Scalar(1)), ErrorCode::kShapeMismatch);
  p.Set("w", Tensor::Vector({3, 4}));
  EXPECT_EQ(p.Get("w")[1], 4.0);
  EXPECT_EQ(p.names(), std::vector<std::string>{"w"});
}

TEST(Tape, ReluSubgradient) {
  ParameterStore p;
  p.Register("x", Tensor::Vector({2.0, -2.0}));
  Tape tape(&p);
  Var y = tape.Sum(tape.Relu(tape.Param("x")));
  GradientMap g = tape.Backward(y);
  EXPECT_EQ(g.at("x")[0], 1.0);
  EXPECT_EQ(g.at("x")[1], 0.0);
}

TEST(Tape, SoftmaxBackwardMatchesJacobian) {
  ParameterStore p;
  p.Register("z", Tensor::Matrix(1, 2, {0.0, 0.0}));
  Tape tape(&p);
  Var s = tape.SoftmaxRows(tape.Param("z"));
  Var y = tape.Sum(tape.Mul(s, tape.Constant(Tensor::Matrix(1, 2, {1.0, 0.0}))));
  GradientMap g = tape.Backward(y);
  EXPECT_NEAR(g.at("z")[0], 0.25, 1e-15);
  EXPECT_NEAR(g.at("z")[1], -0.25, 1e-15);
}

TEST(Tape, L2NormalizeGradientIsOrthogonalToInput) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = RandomTensor(rng, Shape{6});
    double norm = 0.0;
    for (double v : x.data()) norm += v * v;
    for (double &v : x.data()) v /= std::sqrt(norm);
    ParameterStore p;
    p.Register("x", x);
    Tape tape(&p);
    Var y = tape.Dot(tape.L2Normalize(tape.Param("x")),
                     tape.Constant(RandomTensor(rng, Shape{6})));
    const Tensor gx = tape.Backward(y).at("x");
    double d = 0.0;
    for (std::size_t i = 0; i < 6; ++i) d += gx[i] * x[i];
    EXPECT_NEAR(d, 0.0, 1e-12);
  }
}

TEST(Tape, SumOfMatVecGradientIsOuterProduct) {
  Rng rng(9);
  const Tensor x = RandomTensor(rng, Shape{4, 1});
  ParameterStore p;
  p.Register("W", RandomTensor(rng, Shape{3, 4}));
  Tape tape(&p);
  Var y = tape.Sum(tape.MatMul(tape.Param("W"), tape.Constant(x)));
  const Tensor gw = tape.Backward(y).at("W");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(gw.at(i, j), x[j]);
  }
}

TEST(Tape, ConstantOutputGivesZeroGradients) {
  ParameterStore p;
  p.Register("a", Tensor::Vector({1, 2, 3}));
  Tape tape(&p);
  tape.Param("a");
  Var y = tape.Sum(tape.Constant(Tensor::Vector({5, 6})));
  GradientMap g = tape.Backward(y);
  ASSERT_TRUE(g.count("a"));
  for (double v : g.at("a").data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, DisconnectedParameterHasExactlyZeroGradient) {
  ParameterStore p;
  p.Register("used", Tensor::Vector({1, 2}));
  p.Register("unused", Tensor::Vector({3, 4}));
  Tape tape(&p);
  tape.Param("unused");
  Var y = tape.Sum(tape.Mul(tape.Param("used"), tape.Param("used")));
  GradientMap g = tape.Backward(y);
  EXPECT_EQ(g.at("used")[1], 4.0);
  EXPECT_EQ(g.at("unused")[0], 0.0);
  EXPECT_EQ(g.at("unused")[1], 0.0);
}

TEST(Tape, BackwardRejectsNonScalarOutput) {
  ParameterStore p;
  p.Register("a", Tensor::Vector({1, 2}));
  Tape tape(&p);
  Var v = tape.Relu(tape.Param("a"));
  EXPECT_STILAB_ERROR(tape.Backward(v), ErrorCode::kInvalidArgument);
  EXPECT_STILAB_ERROR(tape.Backward(Var{}), ErrorCode::kInvalidArgument);
}

TEST(Tape, ShapeMismatchIsReported) {
  Tape tape;
  Var a = tape.Constant(Tensor(Shape{2, 3}));
  Var b = tape.Constant(Tensor(Shape{2, 3}));
  EXPECT_STILAB_ERROR(tape.MatMul(a, b), ErrorCode::kShapeMismatch);
  EXPECT_STILAB_ERROR(tape.Add(a, tape.Constant(Tensor(Shape{3}))),
                      ErrorCode::kShapeMismatch);
}

TEST(Tape, RowMaxRoutesGradientToFirstTiedEntry) {
  ParameterStore p;
  p.Register("x", Tensor::Matrix(2, 3, {1.0, 5.0, 5.0, 2.0, 2.0, 0.0}));
  Tape tape(&p);
  Var m = tape.RowMax(tape.Param("x"));
  EXPECT_EQ(tape.value(m)[0], 5.0);
  EXPECT_EQ(tape.min_tie_margin(), 0.0);
  const Tensor g = tape.Backward(tape.Sum(m)).at("x");
  EXPECT_EQ(g.values(), (std::vector<double>{0, 1, 0, 1, 0, 0}));
}

TEST(Tape, IdenticalTapesGiveBitwiseIdenticalGradients) {
  Rng rng(21);
  ParameterStore p;
  p.Register("W", RandomTensor(rng, Shape{5, 5}));
  const Tensor x = RandomTensor(rng, Shape{7, 5});
  auto run = [&] {
    Tape tape(&p);
    Var h = tape.SoftmaxRows(tape.MatMul(tape.Constant(x), tape.Param("W")));
    return tape.Backward(tape.Sum(tape.Mul(h, h))).at("W");
  };
  EXPECT_TRUE(run().BitwiseEquals(run()));
}

TEST(Tape, BackwardIsLinearInTheOutput) {
  Rng rng(4);
  ParameterStore p;
  p.Register("W", RandomTensor(rng, Shape{3, 3}));
  const Tensor x = RandomTensor(rng, Shape{4, 3});
  auto f = [&](Tape &t) {
    return t.Sum(t.Relu(t.MatMul(t.Constant(x), t.Param("W"))));
  };
  auto g = [&](Tape &t) {
    Var h = t.MatMul(t.Constant(x), t.Param("W"));
    return t.Sum(t.Mul(h, h));
  };
  const double a = 0.7, b = -1.3;
  Tape tf(&p), tg(&p), tc(&p);
  const Tensor gf = tf.Backward(f(tf)).at("W");
  const Tensor gg = tg.Backward(g(tg)).at("W");
  const Tensor gc =
      tc.Backward(tc.Add(tc.Scale(f(tc), a), tc.Scale(g(tc), b))).at("W");
  for (std::size_t i = 0; i < gc.size(); ++i) {
    EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-12);
  }
}

TEST(FiniteDifference, QuadraticIsExact) {
  ParameterStore p;
  p.Register("x", Tensor::Scalar(3.0));
  FdOptions opt;
  opt.eps = 1e-4;
  const FdReport r = FiniteDifferenceCheck(
      [](Tape &t) {
        Var x = t.Param("x");
        return t.Sum(t.Mul(x, x));
      },
      p, opt);
  EXPECT_NEAR(r.worst_analytic, 6.0, 1e-12);
  EXPECT_NEAR(r.worst_numeric, 6.0, 1e-7);
  EXPECT_LT(r.max_relative_error, 1e-7);
}

TEST(FiniteDifference, IndependentParameterHasZeroBothWays) {
  ParameterStore p;
  p.Register("x", Tensor::Vector({1.0, 2.0}));
  p.Register("ignored", Tensor::Vector({4.0}));
  const FdReport r = FiniteDifferenceCheck(
      [](Tape &t) {
        t.Param("ignored");
        Var x = t.Param("x");
        return t.Sum(t.Mul(x, x));
      },
      p);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coords_checked, 3u);
}

TEST(FiniteDifference, NonFiniteLossIsAnError) {
  ParameterStore p;
  p.Register("x", Tensor::Vector({0.0}));
  EXPECT_STILAB_ERROR(
      FiniteDifferenceCheck(
          [](Tape &t) {
            return t.Sum(t.Exp(t.Scale(t.Exp(t.Param("x")), 1e6)));
          },
          p),
      ErrorCode::kNonFinite);
}

// Every primitive, composed into a scalar, against central differences.
TEST(FiniteDifference, AllPrimitivesAgree) {
  Rng rng(77);
  ParameterStore p;
  p.Register("A", RandomTensor(rng, Shape{4, 3}));
  p.Register("B", RandomTensor(rng, Shape{3, 3}));
  p.Register("b", RandomTensor(rng, Shape{3}));
  p.Register("s", Tensor::Scalar(0.4));
  p.Register("w", RandomTensor(rng, Shape{4}));
  const Tensor c = RandomTensor(rng, Shape{4, 3});
  auto loss = [&](Tape &t) {
    Var a = t.Param("A");
    Var h = t.AddBias(t.MatMul(a, t.Param("B")), t.Param("b"));
    Var nt = t.MatMulNT(h, t.Constant(c));                     // 4 x 4
    Var rm = t.RowMax(t.Reshape(nt, Shape{2, 8}));            // 2
    Var gm = t.GroupMean(h, 2);                               // 2 x 3
    Var sr = t.ScaleRows(gm, rm);                             // 2 x 3
    Var sm = t.SoftmaxRows(t.Transpose(sr));                  // 3 x 2
    Var ls = t.LogSoftmaxRows(t.MulScalar(h, t.Exp(t.Param("s"))));
    Var mr = t.MeanRows(sm);                                  // 2
    Var ws1 = t.WeightedSum(
        h, t.Reshape(t.SoftmaxRows(t.Reshape(t.Param("w"), Shape{1, 4})), Shape{4}));
    Var cos = t.Clamp(t.Dot(t.L2Normalize(ws1), t.L2Normalize(t.Param("b"))),
                      -1.0, 1.0);
    Var r = t.Reciprocal(t.Add(t.Exp(t.Param("s")), t.Constant(Tensor::Scalar(1.0))));
    std::vector<Var> parts = {t.Sum(t.Relu(h)), t.Sum(ls), t.Sum(mr), cos, r};
    return t.Sum(t.Stack(parts, Shape{5}));
  };
  FdOptions opt;
  opt.eps = 1e-6;
  {
    Tape probe(&p);
    loss(probe);
    ASSERT_GT(probe.min_tie_margin(), 1e-4);
    ASSERT_GT(probe.min_relu_margin(), 1e-4);
  }
  const FdReport r = FiniteDifferenceCheck(loss, p, opt);
  EXPECT_LT(r.max_relative_error, 1e-6)
      << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic
      << " vs " << r.worst_numeric;
}

}  // namespace
}  // namespace stilab::grad
