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

// Glue between an ExperimentConfig and the library: data assembly, model
// construction, scoring and the selection sweeps.
//
// Seeds fan out from run.seed by name: "data", "data.test", "subsample" and
// "split" for data; the model and shuffle seeds are run.seed itself (the
// model and trainer derive their own component streams from it).

#ifndef DUQ_EXPERIMENTS_H_
#define DUQ_EXPERIMENTS_H_

#include <optional>
#include <string>
#include <vector>

#include "duq/baselines.h"
#include "duq/config.h"
#include "duq/data.h"
#include "duq/eval.h"
#include "duq/model.h"

namespace duq {

struct PreparedData {
  Dataset train;
  std::optional<Dataset> validation;
  std::optional<Dataset> test;
  std::optional<NormalizationStats> stats;
};

// Builds the training set (generated or IDX), subsamples, splits off the
// validation part and normalises everything with training statistics.
PreparedData PrepareData(const ExperimentConfig& config);

// Loads an extra IDX set and applies the training normalisation.
Dataset LoadAuxiliary(const PreparedData& data, const std::string& images,
                      const std::string& labels, std::size_t class_count,
                      const std::string& name);

DuqModel MakeDuqModel(const ExperimentConfig& config, std::size_t input_dim,
                      std::size_t class_count, std::uint64_t seed);
SoftmaxModel MakeSoftmaxModel(const ExperimentConfig& config, std::size_t input_dim,
                              std::size_t class_count, std::uint64_t seed);

struct Scores {
  std::vector<int> predicted;
  std::vector<double> confidence;  // higher means more in-distribution
};

// DUQ: confidence = max kernel value. Ensemble (or a single softmax model
// as an ensemble of one): confidence = 1 - H / ln C for the entropy H of the
// averaged distribution, an increasing function of -H that lies in [0, 1].
// Rows are processed in chunks to bound memory.
Scores ScoreDuq(const DuqModel& model, const Tensor& x);
Scores ScoreEnsemble(const Ensemble& ensemble, const Tensor& x);

// Sweeps config.eval.sigma_grid with the penalty off, scoring validation
// accuracy.
SelectionResult RunSigmaSelection(const ExperimentConfig& config,
                                  const PreparedData& data);
// Sweeps config.eval.lambda_grid at model.sigma, scoring the AUROC of the
// configured mode.
SelectionResult RunLambdaSelection(const ExperimentConfig& config,
                                   const PreparedData& data);

}  // namespace duq

#endif  // DUQ_EXPERIMENTS_H_
