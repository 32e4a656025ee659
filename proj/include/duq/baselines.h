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

#ifndef DUQ_BASELINES_H_
#define DUQ_BASELINES_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "duq/autodiff.h"
#include "duq/data.h"
#include "duq/model.h"
#include "duq/training.h"

namespace duq {

// Feature extractor followed by a single linear layer d -> C.
class SoftmaxModel {
 public:
  SoftmaxModel() = default;
  SoftmaxModel(std::vector<std::size_t> extractor_sizes, std::size_t class_count,
               std::uint64_t seed);
  static SoftmaxModel FromParts(std::vector<std::size_t> extractor_sizes,
                                std::size_t class_count, ParameterSet params);

  const std::vector<std::size_t>& extractor_sizes() const {
    return extractor_.layer_sizes();
  }
  std::size_t class_count() const { return class_count_; }
  std::size_t input_dim() const { return extractor_.input_dim(); }
  // Extractor parameters followed by "head.w" [d, C] and "head.b" [1, C].
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& mutable_parameters() { return params_; }

  ad::Var Logits(std::span<const ad::Var> params, const ad::Var& x) const;
  Tensor Probabilities(const Tensor& x) const;
  std::vector<int> Predict(const Tensor& x) const;

 private:
  FeatureExtractor extractor_;
  std::size_t class_count_ = 0;
  ParameterSet params_;
};

// Mean negative log-likelihood of the softmax of `logits`.
ad::Var CrossEntropyLoss(const ad::Var& logits, std::span<const int> labels);

// Minibatch SGD on the cross entropy with the optimiser rules of Train().
// The penalty fields of `config` are ignored.
std::vector<EpochMetrics> TrainCrossEntropy(SoftmaxModel& model, const Dataset& data,
                                            const TrainConfig& config,
                                            const EpochCallback& on_epoch = {});

struct Ensemble {
  std::vector<SoftmaxModel> members;
};

// Average of the members' class distributions, one row per input.
Tensor EnsemblePredict(const Ensemble& ensemble, const Tensor& x);

// Entropy in nats of each row; 0 log 0 counts as 0.
std::vector<double> PredictiveEntropy(const Tensor& distributions);

using MemberCallback = std::function<void(std::size_t member, const EpochMetrics&)>;

// Trains members with seeds base_seed, base_seed + 1, ...; each seed drives
// both initialisation and data order. With `parallel` members train on
// separate threads; results match the sequential run.
Ensemble TrainEnsemble(const Dataset& data, std::vector<std::size_t> extractor_sizes,
                       const TrainConfig& config, std::size_t members,
                       std::uint64_t base_seed, bool parallel = false,
                       const MemberCallback& on_epoch = {});

}  // namespace duq

#endif  // DUQ_BASELINES_H_
