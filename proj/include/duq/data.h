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

#ifndef DUQ_DATA_H_
#define DUQ_DATA_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "duq/tensor.h"

namespace duq {

struct Dataset {
  Tensor features;                   // [N, m]
  std::optional<std::vector<int>> labels;
  std::size_t class_count = 0;
  std::string name;

  std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
  std::size_t feature_dim() const { return features.rank() == 2 ? features.cols() : 0; }
  // Labels or throws ConfigError naming the dataset.
  const std::vector<int>& RequireLabels() const;
  // Rows picked by index; labels follow.
  Dataset Subset(std::span<const std::size_t> indices) const;
};

// Two interleaving half circles. The first n/2 points lie on the upper moon
// (cos t, sin t), the rest on the lower moon (1 - cos t, 0.5 - sin t), with t
// evenly spaced over [0, pi] per moon; N(0, noise^2) is added to both
// coordinates.
Dataset MakeTwoMoons(std::size_t n_points, double noise, std::uint64_t seed);

// One-dimensional classes N(-separation/2, spread^2) (label 0) and
// N(+separation/2, spread^2) (label 1), alternating so the set is balanced.
Dataset MakeTwoGaussians(std::size_t n_points, double separation, double spread,
                         std::uint64_t seed);

// (x1, x2) ~ N(0, I); label = [x1 > 0], flipped with probability flip_prob.
Dataset MakeSignData(std::size_t n_points, double flip_prob, std::uint64_t seed);

// Reads an IDX image file (magic 0x00000803) and an optional IDX label file
// (magic 0x00000801). Pixels become row-major features scaled to [0, 1].
Dataset LoadIdx(const std::filesystem::path& images,
                const std::optional<std::filesystem::path>& labels = std::nullopt,
                std::size_t class_count = 10);

// Raw IDX payloads. Used to build fixtures and for round-trip checks.
struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};
IdxImages ReadIdxImages(const std::filesystem::path& path);
std::vector<std::uint8_t> ReadIdxLabels(const std::filesystem::path& path);
void WriteIdxImages(const std::filesystem::path& path, const IdxImages& images);
void WriteIdxLabels(const std::filesystem::path& path,
                    std::span<const std::uint8_t> labels);

enum class NormalizationMode {
  kPerChannel,  // one mean/std over every pixel of every image
  kPerFeature,  // a mean/std per column
};

struct NormalizationStats {
  std::vector<double> mean;  // one entry per feature, or one entry total
  std::vector<double> std;
  NormalizationMode mode = NormalizationMode::kPerChannel;
};

// Statistics of `train`; zero deviations are replaced by 1.
NormalizationStats ComputeNormalization(const Dataset& train, NormalizationMode mode);
Dataset ApplyNormalization(const Dataset& data, const NormalizationStats& stats);

struct NormalizedSets {
  Dataset train;
  std::vector<Dataset> others;
  NormalizationStats stats;
};
// Standardises `train` and every set in `others` with statistics of `train`.
NormalizedSets Normalize(const Dataset& train, std::span<const Dataset> others,
                         NormalizationMode mode = NormalizationMode::kPerChannel);

// Seeded random partition into (train, validation). The validation side gets
// round(fraction * N) points.
std::pair<Dataset, Dataset> Split(const Dataset& data, double validation_fraction,
                                  std::uint64_t seed);

// Random subset of `count` rows (all rows if count >= N), order preserved.
Dataset Subsample(const Dataset& data, std::size_t count, std::uint64_t seed);

// CSV with columns x0..x{m-1} and label (empty when unlabeled).
void WriteCsv(std::ostream& out, const Dataset& data);

}  // namespace duq

#endif  // DUQ_DATA_H_
