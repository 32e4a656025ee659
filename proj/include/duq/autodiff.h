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

// Reverse-mode differentiation over dense tensors.
//
// Every op records its inputs so that Differentiate() can walk the graph
// backwards. Backward rules are themselves expressed with the same ops, so
// when build_graph is set the returned gradients are graph nodes and a scalar
// built from them can be differentiated again (double backpropagation).
//
// A graph is owned by the thread that built it. Nodes are reference counted;
// dropping the last Var that reaches a subgraph frees it.

#ifndef DUQ_AUTODIFF_H_
#define DUQ_AUTODIFF_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "duq/tensor.h"

namespace duq::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kMatMul,
  kTranspose,
  kRelu,
  kExp,
  kLog,
  kReciprocal,
  kSquare,
  kScale,          // x * attr0
  kAddScalar,      // x + attr0
  kClamp,          // clamp(x, attr0, attr1); gradient 0 outside the interval
  kSum,            // all elements -> scalar
  kMean,           // all elements -> scalar
  kSquaredNorm,    // sum of squares -> scalar
  kSumRows,        // [B,k] -> [B,1]
  kSumCols,        // [B,k] -> [1,k]
  kBroadcastRows,  // [1,k] -> [B,k]
  kBroadcastCols,  // [B,1] -> [B,k]
  kExpand,         // one element -> any shape
  kReshape,
  kRowLogSumExp,   // [B,k] -> [B,1]
};

std::string_view OpName(Op op);

struct Node;

// Handle to a node in the computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool valid() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Op op() const;
  // Stable identity of the underlying node.
  const Node* id() const { return node_.get(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct OpAttributes {
  double a = 0.0;
  double b = 0.0;
  Shape shape;  // target shape for kExpand / kReshape
  std::size_t extent = 0;  // broadcast extent
};

struct Node {
  Tensor value;
  Op op = Op::kLeaf;
  OpAttributes attrs;
  std::vector<std::shared_ptr<Node>> parents;
  bool requires_grad = false;
  // Set once the node's backward structure was consumed by a Differentiate
  // call without build_graph.
  bool released = false;
};

// Leaf that gradients flow into.
Var Parameter(Tensor value);
// Leaf that never receives gradient.
Var Constant(Tensor value);

// Applies `op` to `inputs`. Throws ShapeError when the shapes violate the
// op's rule and NumericError when the result is not finite.
Var Apply(Op op, std::span<const Var> inputs, const OpAttributes& attrs = {});

Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var MatMul(const Var& a, const Var& b);
Var Transpose(const Var& x);
Var Relu(const Var& x);
Var Exp(const Var& x);
Var Log(const Var& x);
Var Reciprocal(const Var& x);
Var Square(const Var& x);
Var Scale(const Var& x, double factor);
Var AddScalar(const Var& x, double offset);
Var Clamp(const Var& x, double lo, double hi);
Var Sum(const Var& x);
Var Mean(const Var& x);
Var SquaredNorm(const Var& x);
Var SumRows(const Var& x);
Var SumCols(const Var& x);
Var BroadcastRows(const Var& x, std::size_t rows);
Var BroadcastCols(const Var& x, std::size_t cols);
Var Expand(const Var& x, Shape shape);
Var Reshape(const Var& x, Shape shape);
Var RowLogSumExp(const Var& x);

// While alive, ops on this thread produce constants (no graph is recorded).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

// Gradients keyed by node identity, in the order they were requested.
class GradientMap {
 public:
  void Insert(const Var& node, Var gradient);
  // Gradient for `node`; throws if it was not requested.
  const Var& operator[](const Var& node) const;
  const Var& at(std::size_t i) const { return entries_.at(i).second; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<const Node*, Var>> entries_;
};

// Computes d output / d node for each node in `wrt`. `output` must hold
// exactly one element. Nodes that `output` does not depend on get a zero
// gradient. Without build_graph the traversed graph is released and a second
// differentiation through it throws.
GradientMap Differentiate(const Var& output, std::span<const Var> wrt,
                          bool build_graph = false);

// Central-difference gradient of `f` at `x`, one coordinate at a time.
Tensor FiniteDifference(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace duq::ad

#endif  // DUQ_AUTODIFF_H_
