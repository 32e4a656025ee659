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

#include "duq/experiments.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "duq/error.h"
#include "duq/random.h"
#include "duq/training.h"

namespace duq {
namespace {

constexpr std::size_t kScoreChunk = 1000;

Dataset Generate(const DataSection& d, std::size_t points, std::uint64_t seed) {
  switch (d.source) {
    case DataSource::kMoons: return MakeTwoMoons(points, d.noise, seed);
    case DataSource::kGaussians:
      return MakeTwoGaussians(points, d.separation, d.spread, seed);
    case DataSource::kSign: return MakeSignData(points, d.flip, seed);
    case DataSource::kIdx: break;
  }
  throw ConfigError("data.source = idx has no generator");
}

std::optional<std::filesystem::path> OptionalPath(const std::string& p) {
  if (p.empty()) return std::nullopt;
  return std::filesystem::path(p);
}

Dataset Normalized(const PreparedData& data, Dataset set) {
  return data.stats ? ApplyNormalization(set, *data.stats) : set;
}

template <typename ScoreChunk>
Scores Chunked(const Tensor& x, ScoreChunk&& score) {
  Scores out;
  for (std::size_t start = 0; start < x.rows(); start += kScoreChunk) {
    const std::size_t end = std::min(x.rows(), start + kScoreChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Scores part = score(x.GatherRows(idx));
    out.predicted.insert(out.predicted.end(), part.predicted.begin(), part.predicted.end());
    out.confidence.insert(out.confidence.end(), part.confidence.begin(),
                          part.confidence.end());
  }
  return out;
}

const Dataset& RequireValidation(const PreparedData& data, const char* what) {
  if (!data.validation) {
    throw ConfigError(std::string(what) + " needs data.validation_fraction > 0");
  }
  return *data.validation;
}

std::uint64_t RepeatSeed(const ExperimentConfig& config, std::size_t repeat) {
  return DeriveSeed(config.seed, "select") + repeat;
}

}  // namespace

PreparedData PrepareData(const ExperimentConfig& config) {
  const DataSection& d = config.data;
  Dataset train;
  std::optional<Dataset> test;
  if (d.source == DataSource::kIdx) {
    train = LoadIdx(d.train_images, OptionalPath(d.train_labels), d.classes);
    train.name = "train";
    if (!d.test_images.empty()) {
      test = LoadIdx(d.test_images, OptionalPath(d.test_labels), d.classes);
      test->name = "test";
    }
  } else {
    train = Generate(d, d.points, DeriveSeed(config.seed, "data"));
    train.name = "train";
    if (d.test_points > 0) {
      test = Generate(d, d.test_points, DeriveSeed(config.seed, "data.test"));
      test->name = "test";
    }
  }
  if (d.subsample > 0) {
    train = Subsample(train, d.subsample, DeriveSeed(config.seed, "subsample"));
  }

  PreparedData out;
  if (d.validation_fraction > 0.0) {
    auto [t, v] = Split(train, d.validation_fraction, DeriveSeed(config.seed, "split"));
    train = std::move(t);
    v.name = "validation";
    out.validation = std::move(v);
  }
  if (d.normalization) {
    out.stats = ComputeNormalization(train, *d.normalization);
    train = ApplyNormalization(train, *out.stats);
    if (out.validation) out.validation = ApplyNormalization(*out.validation, *out.stats);
    if (test) test = ApplyNormalization(*test, *out.stats);
  }
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

Dataset LoadAuxiliary(const PreparedData& data, const std::string& images,
                      const std::string& labels, std::size_t class_count,
                      const std::string& name) {
  Dataset set = LoadIdx(images, OptionalPath(labels), class_count);
  set.name = name;
  if (set.feature_dim() != data.train.feature_dim()) {
    throw ConfigError("dataset '" + name + "' has " + std::to_string(set.feature_dim()) +
                      " features, the training set has " +
                      std::to_string(data.train.feature_dim()));
  }
  return Normalized(data, std::move(set));
}

DuqModel MakeDuqModel(const ExperimentConfig& config, std::size_t input_dim,
                      std::size_t class_count, std::uint64_t seed) {
  DuqArchitecture arch{config.ExtractorSizes(input_dim), config.model.centroid_size,
                       class_count};
  return DuqModel(std::move(arch), config.model.sigma, config.train.gamma, seed);
}

SoftmaxModel MakeSoftmaxModel(const ExperimentConfig& config, std::size_t input_dim,
                              std::size_t class_count, std::uint64_t seed) {
  return SoftmaxModel(config.ExtractorSizes(input_dim), class_count, seed);
}

Scores ScoreDuq(const DuqModel& model, const Tensor& x) {
  return Chunked(x, [&model](const Tensor& part) {
    const Tensor k = model.KernelScores(part);
    return Scores{ArgmaxRows(k), MaxRows(k)};
  });
}

Scores ScoreEnsemble(const Ensemble& ensemble, const Tensor& x) {
  return Chunked(x, [&ensemble](const Tensor& part) {
    const Tensor p = EnsemblePredict(ensemble, part);
    std::vector<double> confidence = PredictiveEntropy(p);
    const double max_entropy = std::log(static_cast<double>(p.cols()));
    for (double& v : confidence) v = 1.0 - v / max_entropy;
    return Scores{ArgmaxRows(p), std::move(confidence)};
  });
}

SelectionResult RunSigmaSelection(const ExperimentConfig& config,
                                  const PreparedData& data) {
  const Dataset& validation = RequireValidation(data, "select-sigma");
  const std::vector<int>& labels = validation.RequireLabels();
  return SelectSigma(config.eval.sigma_grid, config.eval.repeats,
                     [&](double sigma, std::size_t repeat) {
                       ExperimentConfig c = config;
                       c.model.sigma = sigma;
                       c.train.lambda = 0.0;
                       c.train.seed = RepeatSeed(config, repeat);
                       DuqModel model = MakeDuqModel(c, data.train.feature_dim(),
                                                     data.train.class_count, c.train.seed);
                       Train(model, data.train, c.train);
                       return Accuracy(ScoreDuq(model, validation.features).predicted,
                                       labels);
                     });
}

SelectionResult RunLambdaSelection(const ExperimentConfig& config,
                                   const PreparedData& data) {
  const Dataset& validation = RequireValidation(data, "select-lambda");
  const std::vector<int>& labels = validation.RequireLabels();
  std::optional<Dataset> third;
  if (config.eval.lambda_mode == LambdaSelectionMode::kThirdDataset) {
    if (config.eval.third_images.empty()) {
      throw ConfigError("eval.third_images is required when eval.lambda_mode = third_dataset");
    }
    third = LoadAuxiliary(data, config.eval.third_images, "", data.train.class_count,
                          "third");
  }
  return SelectLambda(
      config.eval.lambda_grid, config.eval.repeats, [&](double lambda, std::size_t repeat) {
        ExperimentConfig c = config;
        c.train.lambda = lambda;
        c.train.seed = RepeatSeed(config, repeat);
        DuqModel model =
            MakeDuqModel(c, data.train.feature_dim(), data.train.class_count, c.train.seed);
        Train(model, data.train, c.train);
        const Scores val = ScoreDuq(model, validation.features);
        if (third) return Auroc(val.confidence, ScoreDuq(model, third->features).confidence);
        const auto correct = std::make_unique<bool[]>(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
          correct[i] = val.predicted[i] == labels[i];
        }
        return MisclassificationAuroc(
            std::span<const bool>(correct.get(), labels.size()), val.confidence);
      });
}

}  // namespace duq
