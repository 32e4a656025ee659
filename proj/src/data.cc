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

#include "duq/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "duq/error.h"
#include "duq/random.h"

namespace duq {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t BigEndian32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void PutBigEndian32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::string Hex(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

const std::vector<int>& Dataset::RequireLabels() const {
  if (!labels) throw ConfigError("dataset '" + name + "' has no labels");
  return *labels;
}

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.GatherRows(indices);
  out.class_count = class_count;
  out.name = name;
  if (labels) {
    std::vector<int> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) picked.push_back((*labels)[i]);
    out.labels = std::move(picked);
  }
  return out;
}

Dataset MakeTwoMoons(std::size_t n_points, double noise, std::uint64_t seed) {
  if (n_points < 2) throw ConfigError("two moons needs at least 2 points");
  if (noise < 0.0) throw ConfigError("two moons noise must be nonnegative");
  const std::size_t n_upper = n_points / 2;
  const std::size_t n_lower = n_points - n_upper;
  const auto angle = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0
                      : std::numbers::pi * static_cast<double>(i) /
                            static_cast<double>(count - 1);
  };

  Tensor x = Tensor::Zeros({n_points, 2});
  std::vector<int> y(n_points);
  for (std::size_t i = 0; i < n_upper; ++i) {
    const double t = angle(i, n_upper);
    x.at(i, 0) = std::cos(t);
    x.at(i, 1) = std::sin(t);
    y[i] = 0;
  }
  for (std::size_t i = 0; i < n_lower; ++i) {
    const double t = angle(i, n_lower);
    x.at(n_upper + i, 0) = 1.0 - std::cos(t);
    x.at(n_upper + i, 1) = 0.5 - std::sin(t);
    y[n_upper + i] = 1;
  }
  if (noise > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, noise);
    for (double& v : x.mutable_data()) v += dist(rng);
  }
  return {std::move(x), std::move(y), 2, "two_moons"};
}

Dataset MakeTwoGaussians(std::size_t n_points, double separation, double spread,
                         std::uint64_t seed) {
  if (!(spread > 0.0)) throw ConfigError("two gaussians spread must be positive");
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, spread);
  Tensor x = Tensor::Zeros({n_points, 1});
  std::vector<int> y(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    y[i] = static_cast<int>(i % 2);
    const double centre = (y[i] == 0 ? -0.5 : 0.5) * separation;
    x[i] = centre + dist(rng);
  }
  return {std::move(x), std::move(y), 2, "two_gaussians"};
}

Dataset MakeSignData(std::size_t n_points, double flip_prob, std::uint64_t seed) {
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) {
    throw ConfigError("flip probability must lie in [0, 0.5)");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution flip(flip_prob);
  Tensor x = Tensor::Zeros({n_points, 2});
  std::vector<int> y(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    x.at(i, 0) = normal(rng);
    x.at(i, 1) = normal(rng);
    const int clean = x.at(i, 0) > 0.0 ? 1 : 0;
    y[i] = flip(rng) ? 1 - clean : clean;
  }
  return {std::move(x), std::move(y), 2, "sign"};
}

IdxImages ReadIdxImages(const std::filesystem::path& path) {
  const auto bytes = ReadAll(path);
  if (bytes.size() < 16) {
    throw FormatError(path.string() + ": truncated IDX image header");
  }
  const std::uint32_t magic = BigEndian32(bytes, 0);
  if (magic != kImageMagic) {
    throw FormatError(path.string() + ": bad IDX image magic " + Hex(magic) +
                      " (expected " + Hex(kImageMagic) + ")");
  }
  IdxImages out;
  out.count = BigEndian32(bytes, 4);
  out.rows = BigEndian32(bytes, 8);
  out.cols = BigEndian32(bytes, 12);
  const std::size_t expected =
      std::size_t{out.count} * std::size_t{out.rows} * std::size_t{out.cols};
  if (bytes.size() - 16 < expected) {
    throw FormatError(path.string() + ": truncated IDX image payload, expected " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size() - 16));
  }
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + expected);
  return out;
}

std::vector<std::uint8_t> ReadIdxLabels(const std::filesystem::path& path) {
  const auto bytes = ReadAll(path);
  if (bytes.size() < 8) {
    throw FormatError(path.string() + ": truncated IDX label header");
  }
  const std::uint32_t magic = BigEndian32(bytes, 0);
  if (magic != kLabelMagic) {
    throw FormatError(path.string() + ": bad IDX label magic " + Hex(magic) +
                      " (expected " + Hex(kLabelMagic) + ")");
  }
  const std::uint32_t count = BigEndian32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw FormatError(path.string() + ": truncated IDX label payload");
  }
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + count);
}

void WriteIdxImages(const std::filesystem::path& path, const IdxImages& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  PutBigEndian32(out, kImageMagic);
  PutBigEndian32(out, images.count);
  PutBigEndian32(out, images.rows);
  PutBigEndian32(out, images.cols);
  out.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
}

void WriteIdxLabels(const std::filesystem::path& path,
                    std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  PutBigEndian32(out, kLabelMagic);
  PutBigEndian32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

Dataset LoadIdx(const std::filesystem::path& images,
                const std::optional<std::filesystem::path>& labels,
                std::size_t class_count) {
  const IdxImages raw = ReadIdxImages(images);
  const std::size_t m = std::size_t{raw.rows} * raw.cols;
  std::vector<double> features(raw.pixels.size());
  std::transform(raw.pixels.begin(), raw.pixels.end(), features.begin(),
                 [](std::uint8_t p) { return static_cast<double>(p) / 255.0; });
  Dataset out;
  out.features = Tensor({raw.count, m}, std::move(features));
  out.class_count = class_count;
  out.name = images.filename().string();
  if (labels) {
    const auto raw_labels = ReadIdxLabels(*labels);
    if (raw_labels.size() != raw.count) {
      throw FormatError("image/label count mismatch: " + std::to_string(raw.count) +
                        " images vs " + std::to_string(raw_labels.size()) +
                        " labels");
    }
    std::vector<int> y(raw_labels.begin(), raw_labels.end());
    for (int v : y) {
      if (v < 0 || static_cast<std::size_t>(v) >= class_count) {
        throw FormatError(labels->string() + ": label " + std::to_string(v) +
                          " outside [0, " + std::to_string(class_count) + ")");
      }
    }
    out.labels = std::move(y);
  }
  return out;
}

NormalizationStats ComputeNormalization(const Dataset& train, NormalizationMode mode) {
  const std::size_t n = train.size();
  const std::size_t m = train.feature_dim();
  if (n == 0) throw ConfigError("cannot normalise with an empty training set");
  NormalizationStats stats;
  stats.mode = mode;
  const auto x = train.features.data();
  if (mode == NormalizationMode::kPerChannel) {
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    stats.mean = {mean};
    stats.std = {var > 0.0 ? std::sqrt(var) : 1.0};
    return stats;
  }
  stats.mean.assign(m, 0.0);
  stats.std.assign(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) stats.mean[c] += x[r * m + c];
  }
  for (double& v : stats.mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const double d = x[r * m + c] - stats.mean[c];
      stats.std[c] += d * d;
    }
  }
  for (double& v : stats.std) {
    v /= static_cast<double>(n);
    v = v > 0.0 ? std::sqrt(v) : 1.0;
  }
  return stats;
}

Dataset ApplyNormalization(const Dataset& data, const NormalizationStats& stats) {
  Dataset out = data;
  const std::size_t m = data.feature_dim();
  const bool per_feature = stats.mode == NormalizationMode::kPerFeature;
  if (per_feature && stats.mean.size() != m) {
    throw ShapeError("normalisation statistics for " +
                     std::to_string(stats.mean.size()) + " features applied to " +
                     std::to_string(m));
  }
  auto x = out.features.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = per_feature ? i % m : 0;
    x[i] = (x[i] - stats.mean[c]) / stats.std[c];
  }
  return out;
}

NormalizedSets Normalize(const Dataset& train, std::span<const Dataset> others,
                         NormalizationMode mode) {
  NormalizedSets out;
  out.stats = ComputeNormalization(train, mode);
  out.train = ApplyNormalization(train, out.stats);
  for (const Dataset& d : others) out.others.push_back(ApplyNormalization(d, out.stats));
  return out;
}

std::pair<Dataset, Dataset> Split(const Dataset& data, double validation_fraction,
                                  std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_val = static_cast<std::size_t>(
      std::llround(validation_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n) {
    throw ConfigError("split of " + std::to_string(n) + " points with fraction " +
                      std::to_string(validation_fraction) + " leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train(order.begin() + n_val, order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {data.Subset(train), data.Subset(val)};
}

Dataset Subsample(const Dataset& data, std::size_t count, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (count >= n) return data;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return data.Subset(order);
}

void WriteCsv(std::ostream& out, const Dataset& data) {
  const std::size_t m = data.feature_dim();
  for (std::size_t c = 0; c < m; ++c) out << 'x' << c << ',';
  out << "label\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < m; ++c) out << data.features.at(r, c) << ',';
    if (data.labels) out << (*data.labels)[r];
    out << '\n';
  }
}

}  // namespace duq
