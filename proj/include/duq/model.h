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

#ifndef DUQ_MODEL_H_
#define DUQ_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duq/autodiff.h"
#include "duq/tensor.h"

namespace duq {

// Trainable tensor with a stable name (used by checkpoints and diagnostics).
struct NamedTensor {
  std::string name;
  Tensor value;
};

using ParameterSet = std::vector<NamedTensor>;

// Graph leaves for every tensor of `params`, in order. With requires_grad
// unset the leaves are constants.
std::vector<ad::Var> Bind(const ParameterSet& params, bool requires_grad);

// Rows of a [N, m] feature batch whose labels equal `cls`.
std::vector<std::size_t> RowsOfClass(std::span<const int> labels, int cls);

// Fully connected relu network. Sizes are m, h1, ..., d; relu follows every
// layer except the last. Holds only the layout; parameters live in a
// ParameterSet.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  explicit FeatureExtractor(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  // Weight [in, out] and bias [1, out] per layer.
  std::size_t parameter_count() const { return 2 * (sizes_.size() - 1); }

  // Appends "extractor.w<i>", "extractor.b<i>" for every layer. Weights are
  // uniform in +-1 / sqrt(fan_in), biases start at zero.
  void AppendInitialParameters(std::uint64_t seed, ParameterSet& out) const;
  // `params` starts with parameter_count() leaves in the order above.
  ad::Var Forward(std::span<const ad::Var> params, const ad::Var& x) const;

 private:
  std::vector<std::size_t> sizes_;
};

struct DuqArchitecture {
  std::vector<std::size_t> extractor_sizes;  // m, hidden..., d
  std::size_t centroid_size = 0;             // n
  std::size_t class_count = 0;               // C
};

// EMA accumulators. Row c of `centroids`/`sums` belongs to class c.
struct CentroidState {
  Tensor centroids;             // [C, n]
  std::vector<double> counts;   // n_c
  Tensor sums;                  // [C, n]
  double gamma = 0.99;
};

// RBF-head model: K_c = exp(-(1/n) ||W_c f(x) - e_c||^2 / (2 sigma^2)).
//
// The class weight matrices are stored side by side as one [d, C*n] tensor
// so that all projections come out of a single matmul; W_c is the transpose
// of columns [c*n, (c+1)*n).
class DuqModel {
 public:
  DuqModel() = default;
  // Fresh model: parameters initialised from `seed`, centroids from a
  // derived seed. Head entries are uniform in +-sqrt(6 / d).
  DuqModel(DuqArchitecture arch, double sigma, double gamma, std::uint64_t seed);
  // Reassembles a model from stored parts; validates every shape.
  static DuqModel FromParts(DuqArchitecture arch, double sigma,
                            ParameterSet params, CentroidState state);

  const DuqArchitecture& architecture() const { return arch_; }
  std::size_t class_count() const { return arch_.class_count; }
  std::size_t centroid_size() const { return arch_.centroid_size; }
  std::size_t input_dim() const { return extractor_.input_dim(); }
  double sigma() const { return sigma_; }
  const CentroidState& centroid_state() const { return state_; }
  CentroidState& mutable_centroid_state() { return state_; }

  // Extractor parameters followed by "head.w".
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& mutable_parameters() { return params_; }

  // Draws every centroid coordinate from N(0, 0.05^2) and resets the
  // accumulators to n_c = 1, m_c = e_c.
  void InitCentroids(std::uint64_t seed);

  // f(x) for a bound parameter set, [B, d].
  ad::Var Features(std::span<const ad::Var> params, const ad::Var& x) const;
  // W_c f(x) for all classes, [B, C*n].
  ad::Var Projections(std::span<const ad::Var> params, const ad::Var& x) const;
  // Kernel values [B, C]; differentiable in x and the bound parameters.
  // Centroids enter as constants.
  ad::Var KernelScores(std::span<const ad::Var> params, const ad::Var& x) const;

  Tensor KernelScores(const Tensor& x) const;
  std::vector<int> Predict(const Tensor& x) const;
  std::vector<double> Confidence(const Tensor& x) const;

  // One EMA step of the centroid accumulators using the current parameters.
  void UpdateCentroids(const Tensor& x, std::span<const int> labels);

 private:
  DuqArchitecture arch_;
  FeatureExtractor extractor_;
  ParameterSet params_;
  CentroidState state_;
  double sigma_ = 0.1;
};

// Row-wise argmax with ties going to the lowest column.
std::vector<int> ArgmaxRows(const Tensor& scores);
// Row-wise max.
std::vector<double> MaxRows(const Tensor& scores);

}  // namespace duq

#endif  // DUQ_MODEL_H_
