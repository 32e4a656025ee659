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

#include "duq/baselines.h"

#include <cmath>
#include <future>
#include <string>

#include "duq/error.h"
#include "duq/random.h"

namespace duq {

SoftmaxModel::SoftmaxModel(std::vector<std::size_t> extractor_sizes,
                           std::size_t class_count, std::uint64_t seed)
    : extractor_(std::move(extractor_sizes)), class_count_(class_count) {
  if (class_count_ < 2) throw ConfigError("softmax model needs at least 2 classes");
  extractor_.AppendInitialParameters(DeriveSeed(seed, "init.extractor"), params_);
  const std::size_t d = extractor_.output_dim();
  const double w_bound = std::sqrt(6.0 / static_cast<double>(d));
  const double b_bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(DeriveSeed(seed, "init.head"));
  std::uniform_real_distribution<double> w_dist(-w_bound, w_bound);
  std::uniform_real_distribution<double> b_dist(-b_bound, b_bound);
  Tensor w = Tensor::Zeros({d, class_count_});
  for (double& v : w.mutable_data()) v = w_dist(rng);
  Tensor b = Tensor::Zeros({1, class_count_});
  for (double& v : b.mutable_data()) v = b_dist(rng);
  params_.push_back({"head.w", std::move(w)});
  params_.push_back({"head.b", std::move(b)});
}

SoftmaxModel SoftmaxModel::FromParts(std::vector<std::size_t> extractor_sizes,
                                     std::size_t class_count, ParameterSet params) {
  SoftmaxModel expected(std::move(extractor_sizes), class_count, 0);
  if (params.size() != expected.params_.size()) {
    throw ShapeError("softmax model expects " +
                     std::to_string(expected.params_.size()) +
                     " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& want = expected.params_[i];
    if (params[i].name != want.name || params[i].value.shape() != want.value.shape()) {
      throw ShapeError("parameter '" + params[i].name + "' " +
                       ShapeToString(params[i].value.shape()) + " does not match '" +
                       want.name + "' " + ShapeToString(want.value.shape()));
    }
  }
  expected.params_ = std::move(params);
  return expected;
}

ad::Var SoftmaxModel::Logits(std::span<const ad::Var> params,
                             const ad::Var& x) const {
  if (params.size() != params_.size()) {
    throw ShapeError("softmax model bound with the wrong number of parameters");
  }
  if (x.value().rank() != 2 || x.value().cols() != input_dim()) {
    throw ShapeError("softmax model expects inputs of width " +
                     std::to_string(input_dim()) + ", got " +
                     ShapeToString(x.shape()));
  }
  const ad::Var f = extractor_.Forward(params, x);
  const ad::Var& w = params[params.size() - 2];
  const ad::Var& b = params[params.size() - 1];
  return ad::Add(ad::MatMul(f, w), ad::BroadcastRows(b, f.value().rows()));
}

Tensor SoftmaxModel::Probabilities(const Tensor& x) const {
  ad::NoGradScope no_grad;
  const auto bound = Bind(params_, false);
  const ad::Var z = Logits(bound, ad::Constant(x));
  const ad::Var lse = ad::RowLogSumExp(z);
  return ad::Exp(ad::Sub(z, ad::BroadcastCols(lse, class_count_))).value();
}

std::vector<int> SoftmaxModel::Predict(const Tensor& x) const {
  return ArgmaxRows(Probabilities(x));
}

ad::Var CrossEntropyLoss(const ad::Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.rows() != labels.size()) {
    throw ShapeError("cross entropy: logits " + ShapeToString(z.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor onehot = Tensor::Zeros(z.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= z.cols()) {
      throw ConfigError("label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(z.cols()) + ")");
    }
    onehot.at(i, labels[i]) = 1.0;
  }
  const ad::Var picked = ad::SumRows(ad::Mul(logits, ad::Constant(std::move(onehot))));
  return ad::Mean(ad::Sub(ad::RowLogSumExp(logits), picked));
}

std::vector<EpochMetrics> TrainCrossEntropy(SoftmaxModel& model, const Dataset& data,
                                            const TrainConfig& config,
                                            const EpochCallback& on_epoch) {
  if (!(config.learning_rate > 0.0) || config.batch_size == 0) {
    throw ConfigError("train.learning_rate must be > 0 and train.batch_size >= 1");
  }
  const std::vector<int>& labels = data.RequireLabels();
  if (data.class_count != model.class_count()) {
    throw ConfigError("dataset '" + data.name + "' has " +
                      std::to_string(data.class_count) + " classes, model has " +
                      std::to_string(model.class_count()));
  }
  ParameterSet& params = model.mutable_parameters();
  OptimizerState opt = OptimizerState::ZerosLike(params);
  const std::size_t n = data.size();
  std::vector<EpochMetrics> history;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate * config.lr_schedule.MultiplierAt(epoch);
    const auto order = EpochPermutation(n, config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor xb = data.features.GatherRows(idx);
      std::vector<int> yb;
      yb.reserve(idx.size());
      for (std::size_t i : idx) yb.push_back(labels[i]);

      const auto bound = Bind(params, true);
      const ad::Var logits = model.Logits(bound, ad::Constant(xb));
      const ad::Var loss = CrossEntropyLoss(logits, yb);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("cross-entropy training diverged at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      const std::vector<int> predicted = ArgmaxRows(logits.value());
      for (std::size_t i = 0; i < yb.size(); ++i) hits += predicted[i] == yb[i];

      const ad::GradientMap grads = ad::Differentiate(loss, bound);
      std::vector<Tensor> g;
      for (std::size_t i = 0; i < bound.size(); ++i) g.push_back(grads.at(i).value());
      SgdStep(params, g, opt, lr, config.momentum, config.weight_decay);
      loss_sum += value;
      ++batches;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    m.accuracy = n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return history;
}

Tensor EnsemblePredict(const Ensemble& ensemble, const Tensor& x) {
  if (ensemble.members.empty()) throw ConfigError("ensemble has no members");
  Tensor avg = ensemble.members.front().Probabilities(x);
  for (std::size_t i = 1; i < ensemble.members.size(); ++i) {
    const Tensor p = ensemble.members[i].Probabilities(x);
    if (p.shape() != avg.shape()) {
      throw ShapeError("ensemble members disagree on output shape");
    }
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(ensemble.members.size());
  for (double& v : avg.mutable_data()) v *= inv;
  return avg;
}

std::vector<double> PredictiveEntropy(const Tensor& distributions) {
  std::vector<double> out(distributions.rows(), 0.0);
  for (std::size_t r = 0; r < distributions.rows(); ++r) {
    double h = 0.0;
    for (std::size_t c = 0; c < distributions.cols(); ++c) {
      const double p = distributions.at(r, c);
      if (p > 0.0) h -= p * std::log(p);
    }
    out[r] = h;
  }
  return out;
}

Ensemble TrainEnsemble(const Dataset& data, std::vector<std::size_t> extractor_sizes,
                       const TrainConfig& config, std::size_t members,
                       std::uint64_t base_seed, bool parallel,
                       const MemberCallback& on_epoch) {
  if (members == 0) throw ConfigError("ensemble size must be at least 1");
  const auto train_one = [&](std::size_t i) {
    const std::uint64_t seed = base_seed + i;
    SoftmaxModel model(extractor_sizes, data.class_count, seed);
    TrainConfig member_config = config;
    member_config.seed = seed;
    EpochCallback cb;
    if (on_epoch) cb = [&on_epoch, i](const EpochMetrics& m) { on_epoch(i, m); };
    TrainCrossEntropy(model, data, member_config, cb);
    return model;
  };

  Ensemble ensemble;
  if (parallel) {
    std::vector<std::future<SoftmaxModel>> jobs;
    for (std::size_t i = 0; i < members; ++i) {
      jobs.push_back(std::async(std::launch::async, train_one, i));
    }
    for (auto& job : jobs) ensemble.members.push_back(job.get());
  } else {
    for (std::size_t i = 0; i < members; ++i) ensemble.members.push_back(train_one(i));
  }
  return ensemble;
}

}  // namespace duq
