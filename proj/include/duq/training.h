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

#ifndef DUQ_TRAINING_H_
#define DUQ_TRAINING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "duq/autodiff.h"
#include "duq/data.h"
#include "duq/model.h"
#include "duq/random.h"
#include "duq/tensor.h"

namespace duq {

enum class PenaltyMode { kNone, kTwoSided, kOneSided };
enum class PenaltyTarget { kSumKernels, kKernelVector, kFeatures };
enum class PenaltyEstimator { kExact, kHutchinson };

PenaltyMode ParsePenaltyMode(std::string_view text);
PenaltyTarget ParsePenaltyTarget(std::string_view text);
PenaltyEstimator ParsePenaltyEstimator(std::string_view text);
std::string_view ToString(PenaltyMode mode);
std::string_view ToString(PenaltyTarget target);
std::string_view ToString(PenaltyEstimator estimator);

// Piecewise-constant learning-rate multiplier: from epoch `first` onwards
// the multiplier of the last entry with first <= epoch applies. Epochs are
// zero based; before the first entry the multiplier is 1.
struct LrSchedule {
  std::vector<std::pair<std::size_t, double>> steps;

  double MultiplierAt(std::size_t epoch) const;
  // "10:0.2,20:0.04"; empty text gives a constant schedule.
  static LrSchedule Parse(std::string_view text);
  std::string ToString() const;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // Whether weight decay also covers the class weight matrices.
  bool decay_head = true;
  double lambda = 0.0;
  PenaltyMode penalty_mode = PenaltyMode::kTwoSided;
  PenaltyTarget penalty_target = PenaltyTarget::kSumKernels;
  PenaltyEstimator estimator = PenaltyEstimator::kExact;
  bool hutchinson_shared_projection = false;
  double gamma = 0.99;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  LrSchedule lr_schedule;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the first offending field.
  void Validate() const;
  bool penalty_active() const {
    return penalty_mode != PenaltyMode::kNone && lambda > 0.0;
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean objective over the epoch's minibatches
  double accuracy = 0.0;  // fraction of training points classified correctly
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Binary cross entropy summed over classes against one-hot labels, averaged
// over the batch. Kernel values are clamped to [1e-12, 1 - 1e-12] before the
// logarithms.
ad::Var DuqLoss(const ad::Var& scores, std::span<const int> labels);

// Squared l2 norm of the input gradient of the chosen target, one row per
// example ([B, 1]). With the Hutchinson estimator the norm of the gradient
// of a Rademacher projection of the target is returned instead. `x` must
// require grad. The result stays differentiable in the bound parameters.
ad::Var InputGradientSquaredNorm(const DuqModel& model,
                                 std::span<const ad::Var> params,
                                 const ad::Var& x, const ad::Var& scores,
                                 PenaltyTarget target, PenaltyEstimator estimator,
                                 bool shared_projection, Rng& rng);

// lambda * mean((s - 1)^2) or lambda * mean(max(0, s - 1)) over rows of s.
ad::Var PenaltyFromSquaredNorm(const ad::Var& squared_norm, PenaltyMode mode,
                               double lambda);

// Full penalty for a batch. `scores` must be model.KernelScores(params, x).
ad::Var GradientPenalty(const DuqModel& model, std::span<const ad::Var> params,
                        const ad::Var& x, const ad::Var& scores,
                        const TrainConfig& config, Rng& rng);

struct OptimizerState {
  std::vector<Tensor> velocity;

  static OptimizerState ZerosLike(const ParameterSet& params);
};

// Classic momentum SGD with l2 folded into the gradient:
//   v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v.
// `decay` (optional) selects the parameters weight decay applies to.
void SgdStep(ParameterSet& params, std::span<const Tensor> grads,
             OptimizerState& state, double lr, double momentum,
             double weight_decay, std::span<const bool> decay = {});

// Minibatch order for one epoch.
std::vector<std::size_t> EpochPermutation(std::size_t n, std::uint64_t seed,
                                          std::size_t epoch);

// Trains `model` in place: per minibatch a gradient step on the loss plus
// penalty, then a centroid update with the post-step parameters.
std::vector<EpochMetrics> Train(DuqModel& model, const Dataset& data,
                                const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

// Fraction of rows where prediction equals label.
double Accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace duq

#endif  // DUQ_TRAINING_H_
