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

#include "duq/training.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>

#include "duq/error.h"

namespace duq {
namespace {

constexpr double kLogClampLo = 1e-12;
constexpr double kLogClampHi = 1.0 - 1e-12;

Tensor OneHot(std::span<const int> labels, std::size_t classes) {
  Tensor y = Tensor::Zeros({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
    y.at(i, labels[i]) = 1.0;
  }
  return y;
}

Tensor Rademacher(std::size_t rows, std::size_t cols, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Tensor v = Tensor::Zeros({rows, cols});
  for (double& e : v.mutable_data()) e = coin(rng) ? 1.0 : -1.0;
  return v;
}

double ParseDouble(std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

PenaltyMode ParsePenaltyMode(std::string_view text) {
  if (text == "none") return PenaltyMode::kNone;
  if (text == "two_sided") return PenaltyMode::kTwoSided;
  if (text == "one_sided") return PenaltyMode::kOneSided;
  throw ConfigError("unknown penalty mode '" + std::string(text) + "'");
}

PenaltyTarget ParsePenaltyTarget(std::string_view text) {
  if (text == "sum_kernels") return PenaltyTarget::kSumKernels;
  if (text == "kernel_vector") return PenaltyTarget::kKernelVector;
  if (text == "features") return PenaltyTarget::kFeatures;
  throw ConfigError("unknown penalty target '" + std::string(text) + "'");
}

PenaltyEstimator ParsePenaltyEstimator(std::string_view text) {
  if (text == "exact") return PenaltyEstimator::kExact;
  if (text == "hutchinson") return PenaltyEstimator::kHutchinson;
  throw ConfigError("unknown penalty estimator '" + std::string(text) + "'");
}

std::string_view ToString(PenaltyMode mode) {
  switch (mode) {
    case PenaltyMode::kNone: return "none";
    case PenaltyMode::kTwoSided: return "two_sided";
    case PenaltyMode::kOneSided: return "one_sided";
  }
  return "?";
}

std::string_view ToString(PenaltyTarget target) {
  switch (target) {
    case PenaltyTarget::kSumKernels: return "sum_kernels";
    case PenaltyTarget::kKernelVector: return "kernel_vector";
    case PenaltyTarget::kFeatures: return "features";
  }
  return "?";
}

std::string_view ToString(PenaltyEstimator estimator) {
  return estimator == PenaltyEstimator::kExact ? "exact" : "hutchinson";
}

double LrSchedule::MultiplierAt(std::size_t epoch) const {
  double m = 1.0;
  for (const auto& [first, mult] : steps) {
    if (first <= epoch) m = mult;
  }
  return m;
}

LrSchedule LrSchedule::Parse(std::string_view text) {
  LrSchedule out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("lr schedule entry '" + std::string(item) +
                        "' is not epoch:multiplier");
    }
    const double epoch = ParseDouble(item.substr(0, colon));
    const double mult = ParseDouble(item.substr(colon + 1));
    if (epoch < 0 || epoch != std::floor(epoch) || !(mult > 0.0)) {
      throw ConfigError("lr schedule entry '" + std::string(item) + "' is invalid");
    }
    out.steps.emplace_back(static_cast<std::size_t>(epoch), mult);
  }
  std::stable_sort(out.steps.begin(), out.steps.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::string LrSchedule::ToString() const {
  std::ostringstream s;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) s << ',';
    s << steps[i].first << ':' << steps[i].second;
  }
  return s.str();
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("train.momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("train.gamma must lie in (0, 1)");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (penalty_target != PenaltyTarget::kSumKernels &&
      estimator == PenaltyEstimator::kExact) {
    throw ConfigError(
        "train.penalty_target=" + std::string(duq::ToString(penalty_target)) +
        " requires train.estimator=hutchinson");
  }
}

ad::Var DuqLoss(const ad::Var& scores, std::span<const int> labels) {
  const Tensor& k = scores.value();
  if (k.rank() != 2 || k.rows() != labels.size()) {
    throw ShapeError("duq loss: scores " + ShapeToString(k.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const Tensor y = OneHot(labels, k.cols());
  Tensor not_y = y;
  for (double& v : not_y.mutable_data()) v = 1.0 - v;

  const ad::Var clamped = ad::Clamp(scores, kLogClampLo, kLogClampHi);
  const ad::Var log_k = ad::Log(clamped);
  const ad::Var log_not_k = ad::Log(ad::AddScalar(ad::Scale(clamped, -1.0), 1.0));
  const ad::Var per_entry = ad::Add(ad::Mul(ad::Constant(y), log_k),
                                    ad::Mul(ad::Constant(not_y), log_not_k));
  return ad::Scale(ad::Sum(per_entry), -1.0 / static_cast<double>(labels.size()));
}

ad::Var InputGradientSquaredNorm(const DuqModel& model,
                                 std::span<const ad::Var> params,
                                 const ad::Var& x, const ad::Var& scores,
                                 PenaltyTarget target, PenaltyEstimator estimator,
                                 bool shared_projection, Rng& rng) {
  if (!x.requires_grad()) {
    throw ConfigError("gradient penalty needs an input that requires grad");
  }
  ad::Var scalar;
  if (target == PenaltyTarget::kSumKernels) {
    // Rows are independent, so the gradient of the batch sum holds every
    // per-example gradient.
    scalar = ad::Sum(scores);
  } else {
    if (estimator != PenaltyEstimator::kHutchinson) {
      throw ConfigError("penalty target '" + std::string(ToString(target)) +
                        "' is only supported with the hutchinson estimator");
    }
    const ad::Var out =
        target == PenaltyTarget::kKernelVector ? scores : model.Features(params, x);
    const std::size_t rows = out.value().rows();
    const std::size_t cols = out.value().cols();
    ad::Var projection;
    if (shared_projection) {
      projection = ad::BroadcastRows(ad::Constant(Rademacher(1, cols, rng)), rows);
    } else {
      projection = ad::Constant(Rademacher(rows, cols, rng));
    }
    scalar = ad::Sum(ad::Mul(out, projection));
  }
  const ad::Var xs[] = {x};
  const ad::GradientMap g = ad::Differentiate(scalar, xs, /*build_graph=*/true);
  return ad::SumRows(ad::Square(g[x]));
}

ad::Var PenaltyFromSquaredNorm(const ad::Var& squared_norm, PenaltyMode mode,
                               double lambda) {
  const ad::Var excess = ad::AddScalar(squared_norm, -1.0);
  switch (mode) {
    case PenaltyMode::kTwoSided:
      return ad::Scale(ad::Mean(ad::Square(excess)), lambda);
    case PenaltyMode::kOneSided:
      return ad::Scale(ad::Mean(ad::Relu(excess)), lambda);
    case PenaltyMode::kNone:
      break;
  }
  throw ConfigError("no penalty requested");
}

ad::Var GradientPenalty(const DuqModel& model, std::span<const ad::Var> params,
                        const ad::Var& x, const ad::Var& scores,
                        const TrainConfig& config, Rng& rng) {
  const ad::Var sq = InputGradientSquaredNorm(
      model, params, x, scores, config.penalty_target, config.estimator,
      config.hutchinson_shared_projection, rng);
  return PenaltyFromSquaredNorm(sq, config.penalty_mode, config.lambda);
}

OptimizerState OptimizerState::ZerosLike(const ParameterSet& params) {
  OptimizerState s;
  for (const NamedTensor& p : params) s.velocity.push_back(Tensor::Zeros(p.value.shape()));
  return s;
}

void SgdStep(ParameterSet& params, std::span<const Tensor> grads,
             OptimizerState& state, double lr, double momentum,
             double weight_decay, std::span<const bool> decay) {
  if (grads.size() != params.size() || state.velocity.size() != params.size() ||
      (!decay.empty() && decay.size() != params.size())) {
    throw ShapeError("sgd step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    const Tensor& g = grads[i];
    Tensor& v = state.velocity[i];
    if (g.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("sgd step: gradient for '" + params[i].name + "' has shape " +
                       ShapeToString(g.shape()) + ", parameter " +
                       ShapeToString(p.shape()));
    }
    if (!g.AllFinite()) {
      throw NumericError("non-finite gradient for parameter '" + params[i].name + "'");
    }
    const double wd = (decay.empty() || decay[i]) ? weight_decay : 0.0;
    auto pd = p.mutable_data();
    auto vd = v.mutable_data();
    const auto gd = g.data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      vd[j] = momentum * vd[j] + gd[j] + wd * pd[j];
      pd[j] -= lr * vd[j];
    }
  }
}

std::vector<std::size_t> EpochPermutation(std::size_t n, std::uint64_t seed,
                                          std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(SplitMix64(DeriveSeed(seed, "shuffle") + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double Accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) {
    throw ShapeError("accuracy: prediction and label counts differ");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<EpochMetrics> Train(DuqModel& model, const Dataset& data,
                                const TrainConfig& config,
                                const EpochCallback& on_epoch) {
  config.Validate();
  const std::vector<int>& labels = data.RequireLabels();
  if (data.class_count != model.class_count()) {
    throw ConfigError("dataset '" + data.name + "' has " +
                      std::to_string(data.class_count) + " classes, model has " +
                      std::to_string(model.class_count()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.class_count()) {
      throw ConfigError("label " + std::to_string(y) + " outside the model's classes");
    }
  }
  model.mutable_centroid_state().gamma = config.gamma;

  ParameterSet& params = model.mutable_parameters();
  OptimizerState opt = OptimizerState::ZerosLike(params);
  // The head is the last parameter.
  const auto decay = std::make_unique<bool[]>(params.size());
  std::fill_n(decay.get(), params.size(), true);
  if (!config.decay_head) decay[params.size() - 1] = false;

  Rng hutchinson_rng(DeriveSeed(config.seed, "hutchinson"));
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
      const ad::Var x = config.penalty_active() ? ad::Parameter(xb) : ad::Constant(xb);
      const ad::Var scores = model.KernelScores(bound, x);
      ad::Var total = DuqLoss(scores, yb);
      if (config.penalty_active()) {
        total = ad::Add(total, GradientPenalty(model, bound, x, scores, config,
                                               hutchinson_rng));
      }
      const double objective = total.value().item();
      if (!std::isfinite(objective)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches));
      }
      const std::vector<int> predicted = ArgmaxRows(scores.value());
      for (std::size_t i = 0; i < yb.size(); ++i) hits += predicted[i] == yb[i];

      const ad::GradientMap grads = ad::Differentiate(total, bound);
      std::vector<Tensor> g;
      g.reserve(bound.size());
      for (std::size_t i = 0; i < bound.size(); ++i) g.push_back(grads.at(i).value());
      try {
        SgdStep(params, g, opt, lr, config.momentum, config.weight_decay,
                std::span<const bool>(decay.get(), params.size()));
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      model.UpdateCentroids(xb, yb);
      loss_sum += objective;
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

}  // namespace duq
