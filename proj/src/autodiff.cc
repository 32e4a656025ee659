// Copyright 2026 The DUQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "duq/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "duq/error.h"

namespace duq::ad {
namespace {

thread_local bool g_record = true;

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] void ThrowShape(Op op, std::span<const Var> inputs,
                             const std::string& rule) {
  std::string msg = "op '" + std::string(OpName(op)) + "': " + rule + "; got";
  for (const Var& v : inputs) msg += " " + ShapeToString(v.shape());
  throw ShapeError(msg);
}

void RequireArity(Op op, std::span<const Var> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw ShapeError("op '" + std::string(OpName(op)) + "' expects " +
                     std::to_string(n) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
}

void RequireRank2(Op op, std::span<const Var> inputs) {
  for (const Var& v : inputs) {
    if (v.value().rank() != 2) ThrowShape(op, inputs, "operands must be rank 2");
  }
}

template <typename F>
Tensor Map(const Tensor& x, F f) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor(x.shape(), std::move(out));
}

template <typename F>
Tensor Zip(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return Tensor(a.shape(), std::move(out));
}

Tensor Forward(Op op, std::span<const Var> in, const OpAttributes& attrs) {
  switch (op) {
    case Op::kLeaf:
      throw Error("kLeaf cannot be applied");
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      RequireArity(op, in, 2);
      if (in[0].shape() != in[1].shape()) {
        ThrowShape(op, in, "operand shapes must match");
      }
      const Tensor& a = in[0].value();
      const Tensor& b = in[1].value();
      if (op == Op::kAdd) return Zip(a, b, [](double x, double y) { return x + y; });
      if (op == Op::kSub) return Zip(a, b, [](double x, double y) { return x - y; });
      return Zip(a, b, [](double x, double y) { return x * y; });
    }
    case Op::kMatMul: {
      RequireArity(op, in, 2);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      const Tensor& b = in[1].value();
      if (a.cols() != b.rows()) ThrowShape(op, in, "inner extents must match");
      Tensor out = Tensor::Zeros({a.rows(), b.cols()});
      MutMap(out.mutable_data().data(), a.rows(), b.cols()).noalias() =
          ConstMap(a.data().data(), a.rows(), a.cols()) *
          ConstMap(b.data().data(), b.rows(), b.cols());
      return out;
    }
    case Op::kTranspose: {
      RequireArity(op, in, 1);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      Tensor out = Tensor::Zeros({a.cols(), a.rows()});
      MutMap(out.mutable_data().data(), a.cols(), a.rows()) =
          ConstMap(a.data().data(), a.rows(), a.cols()).transpose();
      return out;
    }
    case Op::kRelu:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::kExp:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [](double x) { return std::exp(x); });
    case Op::kLog:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [](double x) { return std::log(x); });
    case Op::kReciprocal:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [](double x) { return 1.0 / x; });
    case Op::kSquare:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [](double x) { return x * x; });
    case Op::kScale:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [c = attrs.a](double x) { return x * c; });
    case Op::kAddScalar:
      RequireArity(op, in, 1);
      return Map(in[0].value(), [c = attrs.a](double x) { return x + c; });
    case Op::kClamp:
      RequireArity(op, in, 1);
      if (!(attrs.a <= attrs.b)) ThrowShape(op, in, "clamp needs lo <= hi");
      return Map(in[0].value(), [lo = attrs.a, hi = attrs.b](double x) {
        return std::clamp(x, lo, hi);
      });
    case Op::kSum:
    case Op::kMean:
    case Op::kSquaredNorm: {
      RequireArity(op, in, 1);
      const auto x = in[0].value().data();
      double acc = 0.0;
      if (op == Op::kSquaredNorm) {
        for (double v : x) acc += v * v;
      } else {
        for (double v : x) acc += v;
      }
      if (op == Op::kMean) {
        if (x.empty()) ThrowShape(op, in, "mean of an empty tensor");
        acc /= static_cast<double>(x.size());
      }
      return Tensor::Scalar(acc);
    }
    case Op::kSumRows: {
      RequireArity(op, in, 1);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      Tensor out = Tensor::Zeros({a.rows(), 1});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) acc += a.at(r, c);
        out[r] = acc;
      }
      return out;
    }
    case Op::kSumCols: {
      RequireArity(op, in, 1);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      Tensor out = Tensor::Zeros({1, a.cols()});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a.at(r, c);
      }
      return out;
    }
    case Op::kBroadcastRows: {
      RequireArity(op, in, 1);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      if (a.rows() != 1) ThrowShape(op, in, "row broadcast needs a [1,k] operand");
      std::vector<double> out;
      out.reserve(attrs.extent * a.cols());
      for (std::size_t r = 0; r < attrs.extent; ++r) {
        out.insert(out.end(), a.data().begin(), a.data().end());
      }
      return Tensor({attrs.extent, a.cols()}, std::move(out));
    }
    case Op::kBroadcastCols: {
      RequireArity(op, in, 1);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      if (a.cols() != 1) ThrowShape(op, in, "column broadcast needs a [B,1] operand");
      std::vector<double> out;
      out.reserve(a.rows() * attrs.extent);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        out.insert(out.end(), attrs.extent, a[r]);
      }
      return Tensor({a.rows(), attrs.extent}, std::move(out));
    }
    case Op::kExpand:
      RequireArity(op, in, 1);
      if (in[0].value().size() != 1) ThrowShape(op, in, "expand needs one element");
      return Tensor::Full(attrs.shape, in[0].value()[0]);
    case Op::kReshape: {
      RequireArity(op, in, 1);
      if (ShapeSize(attrs.shape) != in[0].value().size()) {
        ThrowShape(op, in, "reshape to " + ShapeToString(attrs.shape) +
                               " changes the element count");
      }
      const auto x = in[0].value().data();
      return Tensor(attrs.shape, std::vector<double>(x.begin(), x.end()));
    }
    case Op::kRowLogSumExp: {
      RequireArity(op, in, 1);
      RequireRank2(op, in);
      const Tensor& a = in[0].value();
      if (a.cols() == 0) ThrowShape(op, in, "log-sum-exp over zero columns");
      Tensor out = Tensor::Zeros({a.rows(), 1});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double hi = a.at(r, 0);
        for (std::size_t c = 1; c < a.cols(); ++c) hi = std::max(hi, a.at(r, c));
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) acc += std::exp(a.at(r, c) - hi);
        out[r] = hi + std::log(acc);
      }
      return out;
    }
  }
  throw Error("unknown op");
}

Var MakeNode(Tensor value, Op op, const OpAttributes& attrs,
             std::span<const Var> inputs) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->attrs = attrs;
  bool any = false;
  if (g_record) {
    for (const Var& v : inputs) any = any || v.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var& v : inputs) node->parents.push_back(v.node());
  } else {
    // Values that no gradient can reach are stored as constants.
    node->op = Op::kLeaf;
  }
  return Var(std::move(node));
}

Tensor StepMask(const Tensor& x) {
  return Map(x, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor InsideMask(const Tensor& x, double lo, double hi) {
  return Map(x, [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// Gradient contributions for each parent of `self` given the upstream
// gradient. Entries for parents that do not require grad are left invalid.
std::vector<Var> Backward(const Var& self, const Var& grad) {
  const Node& n = *self.node();
  const auto parent = [&](std::size_t i) { return Var(n.parents[i]); };
  const auto needs = [&](std::size_t i) { return n.parents[i]->requires_grad; };
  std::vector<Var> out(n.parents.size());

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      if (needs(0)) out[0] = grad;
      if (needs(1)) out[1] = grad;
      break;
    case Op::kSub:
      if (needs(0)) out[0] = grad;
      if (needs(1)) out[1] = Scale(grad, -1.0);
      break;
    case Op::kMul:
      if (needs(0)) out[0] = Mul(grad, parent(1));
      if (needs(1)) out[1] = Mul(grad, parent(0));
      break;
    case Op::kMatMul:
      if (needs(0)) out[0] = MatMul(grad, Transpose(parent(1)));
      if (needs(1)) out[1] = MatMul(Transpose(parent(0)), grad);
      break;
    case Op::kTranspose:
      out[0] = Transpose(grad);
      break;
    case Op::kRelu:
      // Derivative at exactly 0 is taken as 0.
      out[0] = Mul(grad, Constant(StepMask(parent(0).value())));
      break;
    case Op::kExp:
      out[0] = Mul(grad, self);
      break;
    case Op::kLog:
      out[0] = Mul(grad, Reciprocal(parent(0)));
      break;
    case Op::kReciprocal:
      out[0] = Mul(grad, Scale(Square(self), -1.0));
      break;
    case Op::kSquare:
      out[0] = Scale(Mul(grad, parent(0)), 2.0);
      break;
    case Op::kScale:
      out[0] = Scale(grad, n.attrs.a);
      break;
    case Op::kAddScalar:
      out[0] = grad;
      break;
    case Op::kClamp:
      out[0] = Mul(grad, Constant(InsideMask(parent(0).value(), n.attrs.a,
                                              n.attrs.b)));
      break;
    case Op::kSum:
      out[0] = Expand(grad, parent(0).shape());
      break;
    case Op::kMean:
      out[0] = Expand(
          Scale(grad, 1.0 / static_cast<double>(parent(0).value().size())),
          parent(0).shape());
      break;
    case Op::kSquaredNorm:
      out[0] = Scale(Mul(Expand(grad, parent(0).shape()), parent(0)), 2.0);
      break;
    case Op::kSumRows:
      out[0] = BroadcastCols(grad, parent(0).value().cols());
      break;
    case Op::kSumCols:
      out[0] = BroadcastRows(grad, parent(0).value().rows());
      break;
    case Op::kBroadcastRows:
      out[0] = SumCols(grad);
      break;
    case Op::kBroadcastCols:
      out[0] = SumRows(grad);
      break;
    case Op::kExpand:
      out[0] = Reshape(Sum(grad), parent(0).shape());
      break;
    case Op::kReshape:
      out[0] = Reshape(grad, parent(0).shape());
      break;
    case Op::kRowLogSumExp: {
      const std::size_t k = parent(0).value().cols();
      const Var softmax = Exp(Sub(parent(0), BroadcastCols(self, k)));
      out[0] = Mul(BroadcastCols(grad, k), softmax);
      break;
    }
  }
  return out;
}

// Nodes reachable from `root` through requires-grad edges, parents before
// children.
std::vector<Node*> TopologicalOrder(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

std::string_view OpName(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "subtract";
    case Op::kMul: return "multiply";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kReciprocal: return "reciprocal";
    case Op::kSquare: return "square";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kClamp: return "clamp";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSquaredNorm: return "squared_norm";
    case Op::kSumRows: return "sum_rows";
    case Op::kSumCols: return "sum_cols";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kBroadcastCols: return "broadcast_cols";
    case Op::kExpand: return "expand";
    case Op::kReshape: return "reshape";
    case Op::kRowLogSumExp: return "row_log_sum_exp";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!node_) throw Error("access through an empty Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Op Var::op() const { return node_ ? node_->op : Op::kLeaf; }

Var Parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Apply(Op op, std::span<const Var> inputs, const OpAttributes& attrs) {
  for (const Var& v : inputs) {
    if (!v.valid()) throw Error("op '" + std::string(OpName(op)) + "' given an empty Var");
  }
  Tensor value = Forward(op, inputs, attrs);
  if (!value.AllFinite()) {
    throw NumericError("op '" + std::string(OpName(op)) +
                       "' produced non-finite values");
  }
  return MakeNode(std::move(value), op, attrs, inputs);
}

namespace {
OpAttributes Scalars(double a, double b = 0.0) {
  OpAttributes attrs;
  attrs.a = a;
  attrs.b = b;
  return attrs;
}
OpAttributes Extent(std::size_t extent) {
  OpAttributes attrs;
  attrs.extent = extent;
  return attrs;
}
OpAttributes TargetShape(Shape shape) {
  OpAttributes attrs;
  attrs.shape = std::move(shape);
  return attrs;
}
Var Unary(Op op, const Var& x, const OpAttributes& attrs = {}) {
  const Var in[] = {x};
  return Apply(op, in, attrs);
}
Var Binary(Op op, const Var& a, const Var& b) {
  const Var in[] = {a, b};
  return Apply(op, in);
}
}  // namespace

Var Add(const Var& a, const Var& b) { return Binary(Op::kAdd, a, b); }
Var Sub(const Var& a, const Var& b) { return Binary(Op::kSub, a, b); }
Var Mul(const Var& a, const Var& b) { return Binary(Op::kMul, a, b); }
Var MatMul(const Var& a, const Var& b) { return Binary(Op::kMatMul, a, b); }
Var Transpose(const Var& x) { return Unary(Op::kTranspose, x); }
Var Relu(const Var& x) { return Unary(Op::kRelu, x); }
Var Exp(const Var& x) { return Unary(Op::kExp, x); }
Var Log(const Var& x) { return Unary(Op::kLog, x); }
Var Reciprocal(const Var& x) { return Unary(Op::kReciprocal, x); }
Var Square(const Var& x) { return Unary(Op::kSquare, x); }
Var Scale(const Var& x, double factor) {
  return Unary(Op::kScale, x, Scalars(factor));
}
Var AddScalar(const Var& x, double offset) {
  return Unary(Op::kAddScalar, x, Scalars(offset));
}
Var Clamp(const Var& x, double lo, double hi) {
  return Unary(Op::kClamp, x, Scalars(lo, hi));
}
Var Sum(const Var& x) { return Unary(Op::kSum, x); }
Var Mean(const Var& x) { return Unary(Op::kMean, x); }
Var SquaredNorm(const Var& x) { return Unary(Op::kSquaredNorm, x); }
Var SumRows(const Var& x) { return Unary(Op::kSumRows, x); }
Var SumCols(const Var& x) { return Unary(Op::kSumCols, x); }
Var BroadcastRows(const Var& x, std::size_t rows) {
  return Unary(Op::kBroadcastRows, x, Extent(rows));
}
Var BroadcastCols(const Var& x, std::size_t cols) {
  return Unary(Op::kBroadcastCols, x, Extent(cols));
}
Var Expand(const Var& x, Shape shape) {
  return Unary(Op::kExpand, x, TargetShape(std::move(shape)));
}
Var Reshape(const Var& x, Shape shape) {
  return Unary(Op::kReshape, x, TargetShape(std::move(shape)));
}
Var RowLogSumExp(const Var& x) { return Unary(Op::kRowLogSumExp, x); }

NoGradScope::NoGradScope() : previous_(g_record) { g_record = false; }
NoGradScope::~NoGradScope() { g_record = previous_; }

void GradientMap::Insert(const Var& node, Var gradient) {
  entries_.emplace_back(node.id(), std::move(gradient));
}

const Var& GradientMap::operator[](const Var& node) const {
  for (const auto& [id, grad] : entries_) {
    if (id == node.id()) return grad;
  }
  throw Error("no gradient was requested for this node");
}

GradientMap Differentiate(const Var& output, std::span<const Var> wrt,
                          bool build_graph) {
  if (!output.valid()) throw Error("differentiate: empty output");
  if (output.value().size() != 1) {
    throw ShapeError("differentiate: output must be scalar, got shape " +
                     ShapeToString(output.shape()));
  }

  std::unordered_map<const Node*, Var> grads;
  std::vector<Node*> order;
  if (output.requires_grad()) {
    order = TopologicalOrder(output.node().get());
    for (const Node* n : order) {
      if (n->released) {
        throw Error(
            "differentiate: graph was already released by an earlier call "
            "without build_graph");
      }
    }
    std::unique_ptr<NoGradScope> no_grad;
    if (!build_graph) no_grad = std::make_unique<NoGradScope>();

    grads.emplace(output.id(), Constant(Tensor::Full(output.shape(), 1.0)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      auto found = grads.find(node);
      if (found == grads.end() || node->parents.empty()) continue;
      const Var self(std::shared_ptr<Node>(output.node(), node));
      std::vector<Var> contributions = Backward(self, found->second);
      for (std::size_t i = 0; i < contributions.size(); ++i) {
        if (!contributions[i].valid()) continue;
        const Node* p = node->parents[i].get();
        if (contributions[i].shape() != p->value.shape()) {
          throw ShapeError("differentiate: gradient shape " +
                           ShapeToString(contributions[i].shape()) +
                           " does not match node shape " +
                           ShapeToString(p->value.shape()) + " below op '" +
                           std::string(OpName(node->op)) + "'");
        }
        auto [slot, inserted] = grads.try_emplace(p, contributions[i]);
        if (!inserted) slot->second = Add(slot->second, contributions[i]);
      }
    }
  }

  GradientMap result;
  for (const Var& v : wrt) {
    auto found = grads.find(v.id());
    if (found != grads.end()) {
      result.Insert(v, found->second);
    } else {
      result.Insert(v, Constant(Tensor::Zeros(v.shape())));
    }
  }

  if (!build_graph) {
    for (Node* n : order) {
      if (!n->parents.empty()) {
        n->parents.clear();
        n->released = true;
      }
    }
  }
  return result;
}

Tensor FiniteDifference(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  Tensor grad = Tensor::Zeros(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace duq::ad
