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

// Experiment configuration.
//
// Grammar: INI text. `[section]` headers, `key = value` lines, `#` or `;`
// comments. Every key has a default, so a file only lists what differs.
// Lists are comma separated. Any key can be overridden as section.key=value.

#ifndef DUQ_CONFIG_H_
#define DUQ_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "duq/data.h"
#include "duq/eval.h"
#include "duq/training.h"

namespace duq {

enum class ModelKind { kDuq, kSoftmax };
ModelKind ParseModelKind(std::string_view text);
std::string_view ToString(ModelKind kind);

enum class DataSource { kMoons, kGaussians, kSign, kIdx };

struct ModelSection {
  ModelKind kind = ModelKind::kDuq;
  std::vector<std::size_t> hidden;  // hidden layer widths
  std::size_t embedding = 10;       // d
  std::size_t centroid_size = 10;   // n
  double sigma = 0.1;
};

struct DataSection {
  DataSource source = DataSource::kMoons;
  std::size_t points = 1000;
  std::size_t test_points = 1000;
  double noise = 0.1;
  double separation = 2.0;
  double spread = 1.0;
  double flip = 0.0;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t classes = 10;
  std::optional<NormalizationMode> normalization;  // unset: none
  std::size_t subsample = 0;                      // 0 keeps everything
  double validation_fraction = 0.0;
};

struct EvalSection {
  std::vector<std::string> checkpoints;  // one for a model, several for an ensemble
  std::string in_images;                 // defaults to data.test_*
  std::string in_labels;
  std::string ood_images;
  std::string third_images;
  std::size_t bins = 50;
  double rejection_step = 0.005;
  std::pair<double, double> grid_x{-3.0, 4.0};
  std::pair<double, double> grid_y{-3.0, 3.0};
  std::size_t grid_resolution = 100;
  std::vector<double> sigma_grid;
  std::vector<double> lambda_grid;
  std::size_t repeats = 1;
  LambdaSelectionMode lambda_mode = LambdaSelectionMode::kInDistribution;
};

struct EnsembleSection {
  std::size_t members = 5;
  bool parallel = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output = "runs/default";
  ModelSection model;
  TrainConfig train;
  DataSection data;
  EvalSection eval;
  EnsembleSection ensemble;

  // Fully resolved "section.key = value" lines, sorted by key, without
  // run.output.
  std::string canonical;
  // FNV-1a of `canonical` as 16 hex digits.
  std::string digest;

  // m, hidden..., d for the feature extractor.
  std::vector<std::size_t> ExtractorSizes(std::size_t input_dim) const;
};

// Raw key/value view with defaults applied; exposed for diagnostics.
using ConfigValues = std::map<std::string, std::string>;
const ConfigValues& DefaultConfigValues();

// Reads `path` (may be empty for defaults only), applies `overrides`
// ("section.key=value") and validates. Throws ConfigError naming the field.
ExperimentConfig LoadConfig(const std::filesystem::path& path,
                            std::span<const std::string> overrides = {});
ExperimentConfig ParseConfig(const std::string& text,
                             std::span<const std::string> overrides = {});

}  // namespace duq

#endif  // DUQ_CONFIG_H_
