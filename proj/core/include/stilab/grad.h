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

// Reverse-mode differentiation over dense tensors.
//
// A Tape records primitives eagerly: every call computes its forward value
// immediately and appends a node holding whatever the backward rule needs.
// Backward() walks the nodes in reverse (the tape is topologically ordered by
// construction) and accumulates vector-Jacobian products into the parameter
// leaves. Reductions run left-to-right in index order so that identical tapes
// produce bitwise-identical gradients.

#ifndef STILAB_GRAD_H_
#define STILAB_GRAD_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stilab/tensor.h"

namespace stilab::grad {

// Named trainable tensors. Shapes are frozen at registration.
class ParameterStore {
 public:
  void Register(std::string name, Tensor value);

  bool Contains(std::string_view name) const;
  const Tensor &Get(std::string_view name) const;
  Tensor &Mutable(std::string_view name);
  // Replaces the value; the new tensor must have the registered shape.
  void Set(std::string_view name, Tensor value);

  // Names in registration order.
  const std::vector<std::string> &names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  bool BitwiseEquals(const ParameterStore &other) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor, std::less<>> values_;
};

using GradientMap = std::map<std::string, Tensor, std::less<>>;

struct Var {
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  std::uint32_t index = kInvalid;
  bool valid() const { return index != kInvalid; }
};

enum class OpKind {
  kConstant,
  kParameter,
  kMatMul,
  kMatMulNT,
  kAddBias,
  kAdd,
  kMul,
  kScale,
  kMulScalar,
  kRelu,
  kReshape,
  kTranspose,
  kRowMax,
  kGroupMean,
  kMeanRows,
  kScaleRows,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kWeightedSum,
  kDot,
  kL2Normalize,
  kClamp,
  kExp,
  kReciprocal,
  kSum,
  kStack,
};

const char *OpName(OpKind kind);

class Tape {
 public:
  // `params` may be null when the tape only holds constants.
  explicit Tape(const ParameterStore *params = nullptr) : params_(params) {}

  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;
  Tape(Tape &&) = default;
  Tape &operator=(Tape &&) = default;

  Var Constant(Tensor value);
  // Leaf bound to a named parameter. Repeated calls return the same node.
  Var Param(std::string_view name);

  // (m x k) * (k x n).
  Var MatMul(Var a, Var b);
  // (m x k) * (n x k)^T.
  Var MatMulNT(Var a, Var b);
  // Adds a length-n vector to every row of an m x n matrix.
  Var AddBias(Var x, Var bias);
  Var Add(Var a, Var b);
  // Elementwise product of equal shapes.
  Var Mul(Var a, Var b);
  Var Scale(Var x, double factor);
  // Multiplies every element by a rank-0 variable.
  Var MulScalar(Var x, Var scalar);
  Var Relu(Var x);
  Var Reshape(Var x, Shape shape);
  Var Transpose(Var x);
  // m x n -> m. Ties resolve to the lowest column; backward routes the whole
  // upstream gradient to that column.
  Var RowMax(Var x);
  // (g*n) x d -> g x d, averaging consecutive blocks of n rows.
  Var GroupMean(Var x, std::size_t group_size);
  // Mean over the leading axis: m x n -> n, or m -> scalar.
  Var MeanRows(Var x);
  // Row i of an m x n matrix multiplied by s[i].
  Var ScaleRows(Var x, Var s);
  Var SoftmaxRows(Var x);
  Var LogSoftmaxRows(Var x);
  // sum_i w[i] * x[i, :] for an m x n matrix and length-m weights.
  Var WeightedSum(Var x, Var weights);
  Var Dot(Var a, Var b);
  Var L2Normalize(Var x);
  Var Clamp(Var x, double lo, double hi);
  Var Exp(Var x);
  Var Reciprocal(Var x);
  // Sum of all elements -> scalar.
  Var Sum(Var x);
  // Packs rank-0 variables into a tensor of the given shape.
  Var Stack(std::span<const Var> scalars, Shape shape);

  const Tensor &value(Var v) const;
  const Shape &shape(Var v) const { return value(v).shape(); }
  OpKind kind(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const ParameterStore *params() const { return params_; }

  // Smallest gap between the winning and runner-up entries of any RowMax
  // row recorded so far (+inf if none).
  double min_tie_margin() const { return min_tie_margin_; }
  // Smallest |input| seen by any Relu (+inf if none).
  double min_relu_margin() const { return min_relu_margin_; }

  // Gradients of a scalar output with respect to every parameter in the
  // store. Parameters that do not reach the output get zero tensors.
  GradientMap Backward(Var output) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    bool requires_grad = false;
    double attr = 0.0;
    double attr2 = 0.0;
    std::size_t size_attr = 0;
    std::vector<std::size_t> saved_index;  // argmax per row for RowMax
    std::string param_name;
  };

  const Node &node(Var v) const;
  Var Push(Node node);
  bool AnyRequiresGrad(std::initializer_list<Var> vars) const;

  const ParameterStore *params_ = nullptr;
  std::vector<Node> nodes_;
  std::map<std::string, std::uint32_t, std::less<>> param_nodes_;
  double min_tie_margin_ = std::numeric_limits<double>::infinity();
  double min_relu_margin_ = std::numeric_limits<double>::infinity();
};

// Builds a scalar loss on a fresh tape bound to the given parameters.
using LossBuilder = std::function<Var(Tape &)>;

struct FdOptions {
  double eps = 1e-6;
  // Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct FdReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Compares Backward() against central differences. The error for one
// coordinate is |analytic - numeric| / max(1, |numeric|).
FdReport FiniteDifferenceCheck(const LossBuilder &loss,
                               const ParameterStore &params,
                               const FdOptions &options = {});

}  // namespace stilab::grad

#endif  // STILAB_GRAD_H_
