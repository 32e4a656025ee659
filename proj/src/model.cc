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

#include "duq/model.h"

#include <cmath>
#include <string>

#include "duq/error.h"
#include "duq/random.h"

namespace duq {

std::vector<ad::Var> Bind(const ParameterSet& params, bool requires_grad) {
  std::vector<ad::Var> out;
  out.reserve(params.size());
  for (const NamedTensor& p : params) {
    out.push_back(requires_grad ? ad::Parameter(p.value) : ad::Constant(p.value));
  }
  return out;
}

std::vector<std::size_t> RowsOfClass(std::span<const int> labels, int cls) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == cls) rows.push_back(i);
  }
  return rows;
}

FeatureExtractor::FeatureExtractor(std::vector<std::size_t> layer_sizes)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw ConfigError("feature extractor needs at least input and output sizes");
  }
  for (std::size_t s : sizes_) {
    if (s == 0) throw ConfigError("feature extractor layer of width 0");
  }
}

void FeatureExtractor::AppendInitialParameters(std::uint64_t seed,
                                               ParameterSet& out) const {
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t fan_in = sizes_[l];
    const std::size_t fan_out = sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w = Tensor::Zeros({fan_in, fan_out});
    for (double& v : w.mutable_data()) v = dist(rng);
    Tensor b = Tensor::Zeros({1, fan_out});
    out.push_back({"extractor.w" + std::to_string(l), std::move(w)});
    out.push_back({"extractor.b" + std::to_string(l), std::move(b)});
  }
}

ad::Var FeatureExtractor::Forward(std::span<const ad::Var> params,
                                  const ad::Var& x) const {
  if (params.size() < parameter_count()) {
    throw ShapeError("feature extractor given too few parameters");
  }
  ad::Var h = x;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const ad::Var& w = params[2 * l];
    const ad::Var& b = params[2 * l + 1];
    h = ad::MatMul(h, w);
    h = ad::Add(h, ad::BroadcastRows(b, h.value().rows()));
    if (l + 1 < layers) h = ad::Relu(h);
  }
  return h;
}

DuqModel::DuqModel(DuqArchitecture arch, double sigma, double gamma,
                   std::uint64_t seed)
    : arch_(std::move(arch)), extractor_(arch_.extractor_sizes), sigma_(sigma) {
  if (!(sigma_ > 0.0)) throw ConfigError("length scale sigma must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("centroid momentum gamma must lie in (0, 1)");
  }
  if (arch_.centroid_size == 0 || arch_.class_count == 0) {
    throw ConfigError("centroid size and class count must be positive");
  }
  extractor_.AppendInitialParameters(DeriveSeed(seed, "init.extractor"), params_);

  const std::size_t d = extractor_.output_dim();
  const std::size_t cn = arch_.class_count * arch_.centroid_size;
  const double bound = std::sqrt(6.0 / static_cast<double>(d));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Rng rng(DeriveSeed(seed, "init.head"));
  Tensor head = Tensor::Zeros({d, cn});
  for (double& v : head.mutable_data()) v = dist(rng);
  params_.push_back({"head.w", std::move(head)});

  state_.gamma = gamma;
  InitCentroids(DeriveSeed(seed, "init.centroids"));
}

DuqModel DuqModel::FromParts(DuqArchitecture arch, double sigma,
                             ParameterSet params, CentroidState state) {
  DuqModel model;
  model.arch_ = std::move(arch);
  model.extractor_ = FeatureExtractor(model.arch_.extractor_sizes);
  model.sigma_ = sigma;
  if (!(sigma > 0.0)) throw ConfigError("length scale sigma must be positive");
  if (!(state.gamma > 0.0 && state.gamma < 1.0)) {
    throw ConfigError("centroid momentum gamma must lie in (0, 1)");
  }

  ParameterSet expected;
  model.extractor_.AppendInitialParameters(0, expected);
  const std::size_t c = model.arch_.class_count;
  const std::size_t n = model.arch_.centroid_size;
  expected.push_back(
      {"head.w", Tensor::Zeros({model.extractor_.output_dim(), c * n})});
  if (params.size() != expected.size()) {
    throw ShapeError("DUQ model expects " + std::to_string(expected.size()) +
                     " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].name ||
        params[i].value.shape() != expected[i].value.shape()) {
      throw ShapeError("parameter '" + params[i].name + "' " +
                       ShapeToString(params[i].value.shape()) + " does not match '" +
                       expected[i].name + "' " +
                       ShapeToString(expected[i].value.shape()));
    }
  }
  const Shape cs{c, n};
  if (state.centroids.shape() != cs || state.sums.shape() != cs ||
      state.counts.size() != c) {
    throw ShapeError("centroid state does not match " + ShapeToString(cs));
  }
  model.params_ = std::move(params);
  model.state_ = std::move(state);
  return model;
}

void DuqModel::InitCentroids(std::uint64_t seed) {
  const std::size_t c = arch_.class_count;
  const std::size_t n = arch_.centroid_size;
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, 0.05);
  state_.centroids = Tensor::Zeros({c, n});
  for (double& v : state_.centroids.mutable_data()) v = dist(rng);
  state_.sums = state_.centroids;
  state_.counts.assign(c, 1.0);
}

ad::Var DuqModel::Features(std::span<const ad::Var> params,
                           const ad::Var& x) const {
  if (x.value().rank() != 2 || x.value().cols() != input_dim()) {
    throw ShapeError("DUQ model expects inputs of width " +
                     std::to_string(input_dim()) + ", got " +
                     ShapeToString(x.shape()));
  }
  return extractor_.Forward(params, x);
}

ad::Var DuqModel::Projections(std::span<const ad::Var> params,
                              const ad::Var& x) const {
  if (params.size() != params_.size()) {
    throw ShapeError("DUQ model bound with the wrong number of parameters");
  }
  return ad::MatMul(Features(params, x), params.back());
}

ad::Var DuqModel::KernelScores(std::span<const ad::Var> params,
                               const ad::Var& x) const {
  const std::size_t c = arch_.class_count;
  const std::size_t n = arch_.centroid_size;
  const ad::Var z = Projections(params, x);
  const std::size_t batch = z.value().rows();

  const ad::Var centroids = ad::Constant(
      Tensor({1, c * n}, std::vector<double>(state_.centroids.data().begin(),
                                             state_.centroids.data().end())));
  const ad::Var diff = ad::Sub(z, ad::BroadcastRows(centroids, batch));

  // Block matrix averaging each class's n squared coordinates.
  Tensor block = Tensor::Zeros({c * n, c});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      block.at(k * n + j, k) = 1.0 / static_cast<double>(n);
    }
  }
  const ad::Var dist = ad::MatMul(ad::Square(diff), ad::Constant(std::move(block)));
  return ad::Exp(ad::Scale(dist, -1.0 / (2.0 * sigma_ * sigma_)));
}

Tensor DuqModel::KernelScores(const Tensor& x) const {
  ad::NoGradScope no_grad;
  const auto bound = Bind(params_, false);
  return KernelScores(bound, ad::Constant(x)).value();
}

std::vector<int> DuqModel::Predict(const Tensor& x) const {
  return ArgmaxRows(KernelScores(x));
}

std::vector<double> DuqModel::Confidence(const Tensor& x) const {
  return MaxRows(KernelScores(x));
}

void DuqModel::UpdateCentroids(const Tensor& x, std::span<const int> labels) {
  const std::size_t c = arch_.class_count;
  const std::size_t n = arch_.centroid_size;
  if (labels.size() != x.rows()) {
    throw ShapeError("centroid update: " + std::to_string(x.rows()) +
                     " rows but " + std::to_string(labels.size()) + " labels");
  }
  Tensor z;
  {
    ad::NoGradScope no_grad;
    const auto bound = Bind(params_, false);
    z = Projections(bound, ad::Constant(x)).value();
  }

  std::vector<double> batch_counts(c, 0.0);
  Tensor batch_sums = Tensor::Zeros({c, n});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(c) + ")");
    }
    batch_counts[y] += 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      batch_sums.at(y, j) += z.at(i, y * n + j);
    }
  }

  const double g = state_.gamma;
  for (std::size_t k = 0; k < c; ++k) {
    const double count = g * state_.counts[k] + (1.0 - g) * batch_counts[k];
    if (!(count > 0.0) || !std::isfinite(count)) {
      throw NumericError("centroid count for class " + std::to_string(k) +
                         " is no longer positive");
    }
    state_.counts[k] = count;
    for (std::size_t j = 0; j < n; ++j) {
      const double m = g * state_.sums.at(k, j) + (1.0 - g) * batch_sums.at(k, j);
      state_.sums.at(k, j) = m;
      state_.centroids.at(k, j) = m / count;
    }
  }
}

std::vector<int> ArgmaxRows(const Tensor& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols(); ++c) {
      if (scores.at(r, c) > scores.at(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> MaxRows(const Tensor& scores) {
  std::vector<double> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    double best = scores.at(r, 0);
    for (std::size_t c = 1; c < scores.cols(); ++c) best = std::max(best, scores.at(r, c));
    out[r] = best;
  }
  return out;
}

}  // namespace duq
