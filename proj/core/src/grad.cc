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

#include "stilab/grad.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "stilab/error.h"
#include "stilab/random.h"

namespace stilab::grad {
namespace {

void Require(bool ok, const std::string &what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

void RequireRank(const Tensor &t, std::size_t rank, const char *op) {
  Require(t.rank() == rank, std::string(op) + " expects rank " +
                                std::to_string(rank) + ", got " +
                                ShapeString(t.shape()));
}

// out += a (m x k) * b (k x n)
void GemmNN(const double *a, const double *b, double *out, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double *orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double *brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out (m x n) += a (m x k) * b^T where b is n x k
void GemmNT(const double *a, const double *b, double *out, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double *brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] += acc;
    }
  }
}

// out (k x n) += a^T * b where a is m x k and b is m x n
void GemmTN(const double *a, const double *b, double *out, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    const double *brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double *orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void AccumulateInto(Tensor &dst, const Tensor &src) {
  if (dst.empty() && src.size() > 0) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

const char *OpName(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kMatMulNT: return "matmul_nt";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMulScalar: return "mul_scalar";
    case OpKind::kRelu: return "relu";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kRowMax: return "row_max";
    case OpKind::kGroupMean: return "group_mean";
    case OpKind::kMeanRows: return "mean_rows";
    case OpKind::kScaleRows: return "scale_rows";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
    case OpKind::kWeightedSum: return "weighted_sum";
    case OpKind::kDot: return "dot";
    case OpKind::kL2Normalize: return "l2_normalize";
    case OpKind::kClamp: return "clamp";
    case OpKind::kExp: return "exp";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kSum: return "sum";
    case OpKind::kStack: return "stack";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ParameterStore

void ParameterStore::Register(std::string name, Tensor value) {
  if (values_.count(name) > 0) {
    throw Error(ErrorCode::kDuplicate, "parameter '" + name + "'");
  }
  names_.push_back(name);
  values_.emplace(std::move(name), std::move(value));
}

bool ParameterStore::Contains(std::string_view name) const {
  return values_.find(name) != values_.end();
}

const Tensor &ParameterStore::Get(std::string_view name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw Error(ErrorCode::kNotFound,
                "parameter '" + std::string(name) + "'");
  }
  return it->second;
}

Tensor &ParameterStore::Mutable(std::string_view name) {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw Error(ErrorCode::kNotFound,
                "parameter '" + std::string(name) + "'");
  }
  return it->second;
}

void ParameterStore::Set(std::string_view name, Tensor value) {
  Tensor &slot = Mutable(name);
  if (slot.shape() != value.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "parameter '" + std::string(name) + "' is " +
                    ShapeString(slot.shape()) + ", got " +
                    ShapeString(value.shape()));
  }
  slot = std::move(value);
}

bool ParameterStore::BitwiseEquals(const ParameterStore &other) const {
  if (names_ != other.names_) return false;
  for (const auto &name : names_) {
    if (!Get(name).BitwiseEquals(other.Get(name))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape: bookkeeping

const Tape::Node &Tape::node(Var v) const {
  if (!v.valid() || v.index >= nodes_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "variable is not recorded on this tape");
  }
  return nodes_[v.index];
}

const Tensor &Tape::value(Var v) const { return node(v).value; }

OpKind Tape::kind(Var v) const { return node(v).kind; }

bool Tape::AnyRequiresGrad(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (node(v).requires_grad) return true;
  }
  return false;
}

Var Tape::Push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::Constant(Tensor value) {
  Node n{OpKind::kConstant, {}, std::move(value)};
  return Push(std::move(n));
}

Var Tape::Param(std::string_view name) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return Var{it->second};
  if (params_ == nullptr) {
    throw Error(ErrorCode::kInvalidArgument,
                "tape has no parameter store for '" + std::string(name) +
                    "'");
  }
  Node n{OpKind::kParameter, {}, params_->Get(name)};
  n.requires_grad = true;
  n.param_name = std::string(name);
  Var v = Push(std::move(n));
  param_nodes_.emplace(std::string(name), v.index);
  return v;
}

// ---------------------------------------------------------------------------
// Tape: forward rules

Var Tape::MatMul(Var a, Var b) {
  const Tensor &ta = value(a);
  const Tensor &tb = value(b);
  RequireRank(ta, 2, "matmul");
  RequireRank(tb, 2, "matmul");
  Require(ta.dim(1) == tb.dim(0),
          "matmul " + ShapeString(ta.shape()) + " * " + ShapeString(tb.shape()));
  const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out(Shape{m, n});
  GemmNN(ta.data().data(), tb.data().data(), out.data().data(), m, k, n);
  Node node{OpKind::kMatMul, {a.index, b.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({a, b});
  return Push(std::move(node));
}

Var Tape::MatMulNT(Var a, Var b) {
  const Tensor &ta = value(a);
  const Tensor &tb = value(b);
  RequireRank(ta, 2, "matmul_nt");
  RequireRank(tb, 2, "matmul_nt");
  Require(ta.dim(1) == tb.dim(1), "matmul_nt " + ShapeString(ta.shape()) +
                                      " * " + ShapeString(tb.shape()) + "^T");
  const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(0);
  Tensor out(Shape{m, n});
  GemmNT(ta.data().data(), tb.data().data(), out.data().data(), m, k, n);
  Node node{OpKind::kMatMulNT, {a.index, b.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({a, b});
  return Push(std::move(node));
}

Var Tape::AddBias(Var x, Var bias) {
  const Tensor &tx = value(x);
  const Tensor &tb = value(bias);
  RequireRank(tx, 2, "add_bias");
  RequireRank(tb, 1, "add_bias");
  Require(tx.dim(1) == tb.dim(0), "add_bias " + ShapeString(tx.shape()) +
                                      " + " + ShapeString(tb.shape()));
  Tensor out = tx;
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += tb[j];
  }
  Node node{OpKind::kAddBias, {x.index, bias.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x, bias});
  return Push(std::move(node));
}

Var Tape::Add(Var a, Var b) {
  const Tensor &ta = value(a);
  const Tensor &tb = value(b);
  Require(ta.shape() == tb.shape(),
          "add " + ShapeString(ta.shape()) + " + " + ShapeString(tb.shape()));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  Node node{OpKind::kAdd, {a.index, b.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({a, b});
  return Push(std::move(node));
}

Var Tape::Mul(Var a, Var b) {
  const Tensor &ta = value(a);
  const Tensor &tb = value(b);
  Require(ta.shape() == tb.shape(),
          "mul " + ShapeString(ta.shape()) + " * " + ShapeString(tb.shape()));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  Node node{OpKind::kMul, {a.index, b.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({a, b});
  return Push(std::move(node));
}

Var Tape::Scale(Var x, double factor) {
  Tensor out = value(x);
  for (double &v : out.data()) v *= factor;
  Node node{OpKind::kScale, {x.index}, std::move(out)};
  node.attr = factor;
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::MulScalar(Var x, Var scalar) {
  const Tensor &ts = value(scalar);
  Require(ts.size() == 1 && ts.rank() == 0,
          "mul_scalar expects a rank-0 factor, got " + ShapeString(ts.shape()));
  Tensor out = value(x);
  const double s = ts[0];
  for (double &v : out.data()) v *= s;
  Node node{OpKind::kMulScalar, {x.index, scalar.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x, scalar});
  return Push(std::move(node));
}

Var Tape::Relu(Var x) {
  Tensor out = value(x);
  double margin = min_relu_margin_;
  for (double &v : out.data()) {
    margin = std::min(margin, std::fabs(v));
    if (v < 0.0) v = 0.0;
  }
  min_relu_margin_ = margin;
  Node node{OpKind::kRelu, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Reshape(Var x, Shape shape) {
  Node node{OpKind::kReshape, {x.index}, value(x).Reshaped(std::move(shape))};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Transpose(Var x) {
  const Tensor &tx = value(x);
  RequireRank(tx, 2, "transpose");
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = tx[i * n + j];
  }
  Node node{OpKind::kTranspose, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::RowMax(Var x) {
  const Tensor &tx = value(x);
  RequireRank(tx, 2, "row_max");
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  Require(n >= 1, "row_max over empty rows");
  Tensor out(Shape{m});
  std::vector<std::size_t> argmax(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double *r = tx.data().data() + i * n;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (r[j] > r[best]) best = j;
    }
    double runner_up = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != best) runner_up = std::max(runner_up, r[j]);
    }
    min_tie_margin_ = std::min(min_tie_margin_, r[best] - runner_up);
    out[i] = r[best];
    argmax[i] = best;
  }
  Node node{OpKind::kRowMax, {x.index}, std::move(out)};
  node.saved_index = std::move(argmax);
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::GroupMean(Var x, std::size_t group_size) {
  const Tensor &tx = value(x);
  RequireRank(tx, 2, "group_mean");
  Require(group_size >= 1 && tx.dim(0) % group_size == 0,
          "group_mean: " + std::to_string(tx.dim(0)) +
              " rows not divisible into groups of " +
              std::to_string(group_size));
  const std::size_t groups = tx.dim(0) / group_size, d = tx.dim(1);
  const double w = 1.0 / static_cast<double>(group_size);
  Tensor out(Shape{groups, d});
  for (std::size_t g = 0; g < groups; ++g) {
    double *o = out.data().data() + g * d;
    for (std::size_t r = 0; r < group_size; ++r) {
      const double *in = tx.data().data() + (g * group_size + r) * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += w * in[j];
    }
  }
  Node node{OpKind::kGroupMean, {x.index}, std::move(out)};
  node.size_attr = group_size;
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::MeanRows(Var x) {
  const Tensor &tx = value(x);
  Require(tx.rank() == 1 || tx.rank() == 2,
          "mean_rows expects rank 1 or 2, got " + ShapeString(tx.shape()));
  Require(tx.dim(0) >= 1, "mean_rows over zero rows");
  const std::size_t m = tx.dim(0);
  const std::size_t n = tx.rank() == 2 ? tx.dim(1) : 1;
  const double w = 1.0 / static_cast<double>(m);
  Tensor out = tx.rank() == 2 ? Tensor(Shape{n}) : Tensor::Scalar(0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += w * tx[i * n + j];
  }
  Node node{OpKind::kMeanRows, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::ScaleRows(Var x, Var s) {
  const Tensor &tx = value(x);
  const Tensor &ts = value(s);
  RequireRank(tx, 2, "scale_rows");
  RequireRank(ts, 1, "scale_rows");
  Require(tx.dim(0) == ts.dim(0), "scale_rows " + ShapeString(tx.shape()) +
                                      " by " + ShapeString(ts.shape()));
  Tensor out = tx;
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= ts[i];
  }
  Node node{OpKind::kScaleRows, {x.index, s.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x, s});
  return Push(std::move(node));
}

Var Tape::SoftmaxRows(Var x) {
  const Tensor &tx = value(x);
  RequireRank(tx, 2, "softmax_rows");
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  Require(n >= 1, "softmax over empty rows");
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double *r = tx.data().data() + i * n;
    double *o = out.data().data() + i * n;
    double mx = r[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(r[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  Node node{OpKind::kSoftmaxRows, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::LogSoftmaxRows(Var x) {
  const Tensor &tx = value(x);
  RequireRank(tx, 2, "log_softmax_rows");
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  Require(n >= 1, "log_softmax over empty rows");
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double *r = tx.data().data() + i * n;
    double *o = out.data().data() + i * n;
    double mx = r[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(r[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) o[j] = r[j] - lse;
  }
  Node node{OpKind::kLogSoftmaxRows, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::WeightedSum(Var x, Var weights) {
  const Tensor &tx = value(x);
  const Tensor &tw = value(weights);
  RequireRank(tx, 2, "weighted_sum");
  RequireRank(tw, 1, "weighted_sum");
  Require(tx.dim(0) == tw.dim(0), "weighted_sum " + ShapeString(tx.shape()) +
                                      " with weights " +
                                      ShapeString(tw.shape()));
  const std::size_t m = tx.dim(0), n = tx.dim(1);
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += tw[i] * tx[i * n + j];
  }
  Node node{OpKind::kWeightedSum, {x.index, weights.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x, weights});
  return Push(std::move(node));
}

Var Tape::Dot(Var a, Var b) {
  const Tensor &ta = value(a);
  const Tensor &tb = value(b);
  RequireRank(ta, 1, "dot");
  Require(ta.shape() == tb.shape(),
          "dot " + ShapeString(ta.shape()) + " . " + ShapeString(tb.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i] * tb[i];
  Node node{OpKind::kDot, {a.index, b.index}, Tensor::Scalar(acc)};
  node.requires_grad = AnyRequiresGrad({a, b});
  return Push(std::move(node));
}

Var Tape::L2Normalize(Var x) {
  const Tensor &tx = value(x);
  RequireRank(tx, 1, "l2_normalize");
  double sq = 0.0;
  for (double v : tx.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "l2_normalize of a zero-norm vector");
  }
  Tensor out = tx;
  for (double &v : out.data()) v /= norm;
  Node node{OpKind::kL2Normalize, {x.index}, std::move(out)};
  node.attr = norm;
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Clamp(Var x, double lo, double hi) {
  Tensor out = value(x);
  for (double &v : out.data()) v = std::clamp(v, lo, hi);
  Node node{OpKind::kClamp, {x.index}, std::move(out)};
  node.attr = lo;
  node.attr2 = hi;
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Exp(Var x) {
  Tensor out = value(x);
  for (double &v : out.data()) v = std::exp(v);
  Node node{OpKind::kExp, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Reciprocal(Var x) {
  Tensor out = value(x);
  for (double &v : out.data()) {
    if (v == 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "reciprocal of zero");
    }
    v = 1.0 / v;
  }
  Node node{OpKind::kReciprocal, {x.index}, std::move(out)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Sum(Var x) {
  double acc = 0.0;
  for (double v : value(x).data()) acc += v;
  Node node{OpKind::kSum, {x.index}, Tensor::Scalar(acc)};
  node.requires_grad = AnyRequiresGrad({x});
  return Push(std::move(node));
}

Var Tape::Stack(std::span<const Var> scalars, Shape shape) {
  Require(NumElements(shape) == scalars.size(),
          "stack of " + std::to_string(scalars.size()) + " scalars into " +
              ShapeString(shape));
  Tensor out(std::move(shape));
  Node node{OpKind::kStack, {}, Tensor()};
  node.inputs.reserve(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor &ts = value(scalars[i]);
    Require(ts.size() == 1, "stack expects scalar inputs");
    out[i] = ts[0];
    node.inputs.push_back(scalars[i].index);
    node.requires_grad = node.requires_grad || nodes_[scalars[i].index].requires_grad;
  }
  node.value = std::move(out);
  return Push(std::move(node));
}

// ---------------------------------------------------------------------------
// Tape: backward rules

GradientMap Tape::Backward(Var output) const {
  const Node &out_node = node(output);
  if (out_node.value.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "backward from non-scalar output of shape " +
                    ShapeString(out_node.value.shape()));
  }

  GradientMap result;
  if (params_ != nullptr) {
    for (const auto &name : params_->names()) {
      result.emplace(name, Tensor(params_->Get(name).shape()));
    }
  }
  if (!out_node.requires_grad) return result;

  // Empty tensor means "no gradient yet" (zero).
  std::vector<Tensor> grads(output.index + 1);
  grads[output.index] = Tensor(out_node.value.shape(), 1.0);

  auto grad_slot = [&](std::uint32_t idx) -> Tensor * {
    if (!nodes_[idx].requires_grad) return nullptr;
    Tensor &g = grads[idx];
    if (g.empty()) g = Tensor(nodes_[idx].value.shape());
    return &g;
  };

  for (std::uint32_t idx = output.index + 1; idx-- > 0;) {
    const Node &n = nodes_[idx];
    if (!n.requires_grad || grads[idx].empty()) continue;
    const Tensor &dy = grads[idx];

    switch (n.kind) {
      case OpKind::kConstant:
        break;
      case OpKind::kParameter:
        AccumulateInto(result.at(n.param_name), dy);
        break;
      case OpKind::kMatMul: {
        const Tensor &a = nodes_[n.inputs[0]].value;
        const Tensor &b = nodes_[n.inputs[1]].value;
        const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
        if (Tensor *da = grad_slot(n.inputs[0])) {
          // dA = dY * B^T
          GemmNT(dy.data().data(), b.data().data(), da->data().data(), m,
                 cols, k);
        }
        if (Tensor *db = grad_slot(n.inputs[1])) {
          // dB = A^T * dY
          GemmTN(a.data().data(), dy.data().data(), db->data().data(), m, k,
                 cols);
        }
        break;
      }
      case OpKind::kMatMulNT: {
        const Tensor &a = nodes_[n.inputs[0]].value;
        const Tensor &b = nodes_[n.inputs[1]].value;
        const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(0);
        if (Tensor *da = grad_slot(n.inputs[0])) {
          // dA = dY * B
          GemmNN(dy.data().data(), b.data().data(), da->data().data(), m,
                 cols, k);
        }
        if (Tensor *db = grad_slot(n.inputs[1])) {
          // dB = dY^T * A
          GemmTN(dy.data().data(), a.data().data(), db->data().data(), m,
                 cols, k);
        }
        break;
      }
      case OpKind::kAddBias: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
        }
        if (Tensor *db = grad_slot(n.inputs[1])) {
          const std::size_t m = dy.dim(0), cols = dy.dim(1);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < cols; ++j) (*db)[j] += dy[i * cols + j];
          }
        }
        break;
      }
      case OpKind::kAdd: {
        for (int side = 0; side < 2; ++side) {
          if (Tensor *d = grad_slot(n.inputs[side])) {
            for (std::size_t i = 0; i < dy.size(); ++i) (*d)[i] += dy[i];
          }
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor &a = nodes_[n.inputs[0]].value;
        const Tensor &b = nodes_[n.inputs[1]].value;
        if (Tensor *da = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * b[i];
        }
        if (Tensor *db = grad_slot(n.inputs[1])) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*db)[i] += dy[i] * a[i];
        }
        break;
      }
      case OpKind::kScale: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += n.attr * dy[i];
        }
        break;
      }
      case OpKind::kMulScalar: {
        const Tensor &x = nodes_[n.inputs[0]].value;
        const double s = nodes_[n.inputs[1]].value[0];
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += s * dy[i];
        }
        if (Tensor *ds = grad_slot(n.inputs[1])) {
          double acc = 0.0;
          for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * x[i];
          (*ds)[0] += acc;
        }
        break;
      }
      case OpKind::kRelu: {
        const Tensor &x = nodes_[n.inputs[0]].value;
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) {
            if (x[i] > 0.0) (*dx)[i] += dy[i];
          }
        }
        break;
      }
      case OpKind::kReshape: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
        }
        break;
      }
      case OpKind::kTranspose: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const std::size_t rows = dy.dim(0), cols = dy.dim(1);
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              (*dx)[j * rows + i] += dy[i * cols + j];
            }
          }
        }
        break;
      }
      case OpKind::kRowMax: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const std::size_t cols = dx->dim(1);
          for (std::size_t i = 0; i < dy.size(); ++i) {
            (*dx)[i * cols + n.saved_index[i]] += dy[i];
          }
        }
        break;
      }
      case OpKind::kGroupMean: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const std::size_t group = n.size_attr, d = dy.dim(1);
          const double w = 1.0 / static_cast<double>(group);
          for (std::size_t g = 0; g < dy.dim(0); ++g) {
            for (std::size_t r = 0; r < group; ++r) {
              double *o = dx->data().data() + (g * group + r) * d;
              for (std::size_t j = 0; j < d; ++j) o[j] += w * dy[g * d + j];
            }
          }
        }
        break;
      }
      case OpKind::kMeanRows: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const std::size_t m = dx->dim(0);
          const std::size_t cols = dx->size() / m;
          const double w = 1.0 / static_cast<double>(m);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              (*dx)[i * cols + j] += w * dy[j];
            }
          }
        }
        break;
      }
      case OpKind::kScaleRows: {
        const Tensor &x = nodes_[n.inputs[0]].value;
        const Tensor &s = nodes_[n.inputs[1]].value;
        const std::size_t m = x.dim(0), cols = x.dim(1);
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              (*dx)[i * cols + j] += s[i] * dy[i * cols + j];
            }
          }
        }
        if (Tensor *ds = grad_slot(n.inputs[1])) {
          for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              acc += dy[i * cols + j] * x[i * cols + j];
            }
            (*ds)[i] += acc;
          }
        }
        break;
      }
      case OpKind::kSoftmaxRows: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const Tensor &y = n.value;
          const std::size_t m = y.dim(0), cols = y.dim(1);
          for (std::size_t i = 0; i < m; ++i) {
            double inner = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              inner += dy[i * cols + j] * y[i * cols + j];
            }
            for (std::size_t j = 0; j < cols; ++j) {
              (*dx)[i * cols + j] += y[i * cols + j] * (dy[i * cols + j] - inner);
            }
          }
        }
        break;
      }
      case OpKind::kLogSoftmaxRows: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const Tensor &y = n.value;
          const std::size_t m = y.dim(0), cols = y.dim(1);
          for (std::size_t i = 0; i < m; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < cols; ++j) total += dy[i * cols + j];
            for (std::size_t j = 0; j < cols; ++j) {
              (*dx)[i * cols + j] +=
                  dy[i * cols + j] - std::exp(y[i * cols + j]) * total;
            }
          }
        }
        break;
      }
      case OpKind::kWeightedSum: {
        const Tensor &x = nodes_[n.inputs[0]].value;
        const Tensor &w = nodes_[n.inputs[1]].value;
        const std::size_t m = x.dim(0), cols = x.dim(1);
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              (*dx)[i * cols + j] += w[i] * dy[j];
            }
          }
        }
        if (Tensor *dw = grad_slot(n.inputs[1])) {
          for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += dy[j] * x[i * cols + j];
            (*dw)[i] += acc;
          }
        }
        break;
      }
      case OpKind::kDot: {
        const Tensor &a = nodes_[n.inputs[0]].value;
        const Tensor &b = nodes_[n.inputs[1]].value;
        const double g = dy[0];
        if (Tensor *da = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < a.size(); ++i) (*da)[i] += g * b[i];
        }
        if (Tensor *db = grad_slot(n.inputs[1])) {
          for (std::size_t i = 0; i < b.size(); ++i) (*db)[i] += g * a[i];
        }
        break;
      }
      case OpKind::kL2Normalize: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const Tensor &y = n.value;
          double inner = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * dy[i];
          for (std::size_t i = 0; i < y.size(); ++i) {
            (*dx)[i] += (dy[i] - y[i] * inner) / n.attr;
          }
        }
        break;
      }
      case OpKind::kClamp: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          const Tensor &x = nodes_[n.inputs[0]].value;
          for (std::size_t i = 0; i < dy.size(); ++i) {
            if (x[i] >= n.attr && x[i] <= n.attr2) (*dx)[i] += dy[i];
          }
        }
        break;
      }
      case OpKind::kExp: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) {
            (*dx)[i] += dy[i] * n.value[i];
          }
        }
        break;
      }
      case OpKind::kReciprocal: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dy.size(); ++i) {
            (*dx)[i] -= dy[i] * n.value[i] * n.value[i];
          }
        }
        break;
      }
      case OpKind::kSum: {
        if (Tensor *dx = grad_slot(n.inputs[0])) {
          for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += dy[0];
        }
        break;
      }
      case OpKind::kStack: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          if (Tensor *d = grad_slot(n.inputs[i])) (*d)[0] += dy[i];
        }
        break;
      }
    }
    if (n.kind != OpKind::kParameter) {
      // Intermediate gradients are no longer needed.
      grads[idx] = Tensor();
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite differences

FdReport FiniteDifferenceCheck(const LossBuilder &loss,
                               const ParameterStore &params,
                               const FdOptions &options) {
  if (!(options.eps > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "eps must be positive");
  }
  auto evaluate = [&](const ParameterStore &store) {
    Tape tape(&store);
    Var out = loss(tape);
    const double v = tape.value(out)[0];
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "loss evaluated to " +
                                             std::to_string(v));
    }
    return v;
  };

  GradientMap analytic;
  {
    Tape tape(&params);
    Var out = loss(tape);
    if (!std::isfinite(tape.value(out)[0])) {
      throw Error(ErrorCode::kNonFinite, "loss is not finite");
    }
    analytic = tape.Backward(out);
  }

  FdReport report;
  Rng rng(options.seed);
  ParameterStore probe = params;
  for (const auto &name : params.names()) {
    const std::size_t n = params.Get(name).size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coords_per_param > 0 &&
        options.max_coords_per_param < n) {
      rng.Shuffle(coords);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double original = params.Get(name)[c];
      probe.Mutable(name)[c] = original + options.eps;
      const double up = evaluate(probe);
      probe.Mutable(name)[c] = original - options.eps;
      const double down = evaluate(probe);
      probe.Mutable(name)[c] = original;

      const double numeric = (up - down) / (2.0 * options.eps);
      const double exact = analytic.at(name)[c];
      const double err =
          std::fabs(exact - numeric) / std::max(1.0, std::fabs(numeric));
      ++report.coords_checked;
      if (err > report.max_relative_error || report.worst_param.empty()) {
        report.max_relative_error = err;
        report.worst_param = name;
        report.worst_index = c;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace stilab::grad
