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
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "duq/error.h"
#include "fixtures.h"

namespace duq {
namespace {

using testing::ScratchDir;
using testing::WriteText;

TEST(TwoMoonsTest, NoiselessEndpoints) {
  const Dataset d = MakeTwoMoons(4, 0.0, 1);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.features.at(0, 0), 1.0);
  EXPECT_EQ(d.features.at(0, 1), 0.0);
  EXPECT_EQ(d.features.at(2, 0), 0.0);
  EXPECT_EQ(d.features.at(2, 1), 0.5);
  EXPECT_EQ(*d.labels, (std::vector<int>{0, 0, 1, 1}));
}

TEST(TwoMoonsTest, NoiselessUpperMoonOnUnitCircle) {
  const Dataset d = MakeTwoMoons(500, 0.0, 1);
  for (std::size_t i = 0; i < 250; ++i) {
    const double r2 = std::pow(d.features.at(i, 0), 2) + std::pow(d.features.at(i, 1), 2);
    EXPECT_NEAR(r2, 1.0, 1e-12);
  }
}

TEST(TwoMoonsTest, Deterministic) {
  EXPECT_EQ(MakeTwoMoons(300, 0.1, 5).features, MakeTwoMoons(300, 0.1, 5).features);
  EXPECT_NE(MakeTwoMoons(300, 0.1, 5).features, MakeTwoMoons(300, 0.1, 6).features);
}

double ClassMean(const Dataset& d, int cls) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if ((*d.labels)[i] == cls) {
      sum += d.features[i];
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

TEST(TwoGaussiansTest, SeparatedMeansAndBalance) {
  const Dataset d = MakeTwoGaussians(20000, 8.0, 1.0, 3);
  EXPECT_EQ(std::count(d.labels->begin(), d.labels->end(), 1), 10000);
  EXPECT_NEAR(ClassMean(d, 1) - ClassMean(d, 0), 8.0, 0.05);
  EXPECT_EQ(d.features, MakeTwoGaussians(20000, 8.0, 1.0, 3).features);
}

TEST(TwoGaussiansTest, ZeroSeparationGivesIdenticalClasses) {
  const Dataset d = MakeTwoGaussians(20000, 0.0, 1.0, 3);
  EXPECT_NEAR(ClassMean(d, 1) - ClassMean(d, 0), 0.0, 0.05);
}

TEST(SignDataTest, NoiselessLabelsFollowSign) {
  const Dataset d = MakeSignData(1000, 0.0, 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ((*d.labels)[i], d.features.at(i, 0) > 0.0 ? 1 : 0);
  }
}

TEST(SignDataTest, FlipRateAndIndependentSecondCoordinate) {
  const std::size_t n = 100000;
  const Dataset d = MakeSignData(n, 0.2, 2);
  std::size_t flips = 0;
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = (*d.labels)[i];
    flips += y != (d.features.at(i, 0) > 0.0 ? 1 : 0);
    const double x2 = d.features.at(i, 1);
    sx += x2;
    sy += y;
    sxy += x2 * y;
    sxx += x2 * x2;
    syy += y * y;
  }
  EXPECT_NEAR(static_cast<double>(flips) / n, 0.2, 0.01);
  const double nn = static_cast<double>(n);
  const double corr = (sxy - sx * sy / nn) /
                      std::sqrt((sxx - sx * sx / nn) * (syy - sy * sy / nn));
  EXPECT_LT(std::abs(corr), 0.02);
}

TEST(SignDataTest, FlipProbabilityValidated) {
  EXPECT_THROW(MakeSignData(10, 0.5, 1), ConfigError);
}

TEST(IdxTest, AllWhiteImagesReadAsOnes) {
  ScratchDir dir("idx_white");
  WriteIdxImages(dir / "img", IdxImages{2, 2, 2, std::vector<std::uint8_t>(8, 255)});
  const std::uint8_t labels[] = {3, 7};
  WriteIdxLabels(dir / "lbl", labels);
  const Dataset d = LoadIdx(dir / "img", dir / "lbl");
  EXPECT_EQ(d.features, Tensor::Full({2, 4}, 1.0));
  EXPECT_EQ(*d.labels, (std::vector<int>{3, 7}));
  EXPECT_EQ(d.class_count, 10u);
}

TEST(IdxTest, ZeroByteIsZeroFeature) {
  ScratchDir dir("idx_zero");
  WriteIdxImages(dir / "img", IdxImages{1, 1, 2, {0, 51}});
  const Dataset d = LoadIdx(dir / "img");
  EXPECT_EQ(d.features.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(d.features.at(0, 1), 0.2);
  EXPECT_FALSE(d.labels.has_value());
}

TEST(IdxTest, RoundTrip) {
  ScratchDir dir("idx_round");
  IdxImages images{3, 2, 3, {}};
  for (int i = 0; i < 18; ++i) images.pixels.push_back(static_cast<std::uint8_t>(i * 14));
  WriteIdxImages(dir / "img", images);
  const IdxImages back = ReadIdxImages(dir / "img");
  EXPECT_EQ(back.count, 3u);
  EXPECT_EQ(back.rows, 2u);
  EXPECT_EQ(back.cols, 3u);
  EXPECT_EQ(back.pixels, images.pixels);
}

TEST(IdxTest, WrongMagicNamedInError) {
  ScratchDir dir("idx_magic");
  WriteText(dir / "img", std::string("\x00\x00\x08\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00", 17));
  try {
    ReadIdxImages(dir / "img");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000801"), std::string::npos) << e.what();
  }
}

TEST(IdxTest, TruncatedPayloadRejected) {
  ScratchDir dir("idx_trunc");
  WriteIdxImages(dir / "img", IdxImages{2, 2, 2, std::vector<std::uint8_t>(8, 1)});
  const std::string bytes = testing::ReadFile(dir / "img");
  WriteText(dir / "img", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(ReadIdxImages(dir / "img"), FormatError);
}

TEST(IdxTest, LabelOutOfRangeRejected) {
  ScratchDir dir("idx_range");
  WriteIdxImages(dir / "img", IdxImages{1, 1, 1, {0}});
  const std::uint8_t labels[] = {12};
  WriteIdxLabels(dir / "lbl", labels);
  EXPECT_THROW(LoadIdx(dir / "img", dir / "lbl", 10), FormatError);
}

TEST(IdxTest, MissingFileRejected) {
  EXPECT_THROW(ReadIdxImages("/nonexistent/duq/images"), FormatError);
}

TEST(NormalizationTest, PerFeatureStandardisesTrain) {
  Dataset d;
  d.features = testing::UniformTensor({500, 3}, 4, -2.0, 5.0);
  const Dataset n = Normalize(d, {}, NormalizationMode::kPerFeature).train;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t r = 0; r < 500; ++r) mean += n.features.at(r, c);
    mean /= 500;
    for (std::size_t r = 0; r < 500; ++r) sq += std::pow(n.features.at(r, c) - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(sq / 500), 1.0, 1e-9);
  }
}

TEST(NormalizationTest, ConstantFeatureMapsToZero) {
  Dataset d;
  d.features = Tensor::Matrix({{1.0, 3.0}, {2.0, 3.0}});
  const Dataset n = Normalize(d, {}, NormalizationMode::kPerFeature).train;
  EXPECT_EQ(n.features.at(0, 1), 0.0);
  EXPECT_EQ(n.features.at(1, 1), 0.0);
}

TEST(NormalizationTest, OtherSetsUseTrainStatistics) {
  Dataset train;
  train.features = testing::UniformTensor({200, 2}, 5, 0.0, 1.0);
  Dataset far;
  far.features = testing::UniformTensor({200, 2}, 6, 10.0, 11.0);
  const std::vector<Dataset> others{far};
  const NormalizedSets out = Normalize(train, others);
  double mean = 0.0;
  for (double v : out.others[0].features.data()) mean += v;
  EXPECT_GT(mean / 400.0, 5.0);
  EXPECT_EQ(out.stats.mean.size(), 1u);
}

TEST(SplitTest, ValidationSizeAndPartition) {
  Dataset d;
  d.features = Tensor::Zeros({60000, 1});
  for (std::size_t i = 0; i < 60000; ++i) d.features[i] = static_cast<double>(i);
  d.labels = std::vector<int>(60000, 0);
  const auto [train, val] = Split(d, 1.0 / 12.0, 8);
  EXPECT_EQ(train.size(), 55000u);
  EXPECT_EQ(val.size(), 5000u);
  std::vector<double> all(train.features.data().begin(), train.features.data().end());
  all.insert(all.end(), val.features.data().begin(), val.features.data().end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, std::vector<double>(d.features.data().begin(), d.features.data().end()));
  EXPECT_EQ(Split(d, 1.0 / 12.0, 8).second.features, val.features);
}

TEST(SplitTest, DegenerateFractionRejected) {
  const Dataset d = MakeTwoMoons(10, 0.0, 1);
  EXPECT_THROW(Split(d, 0.0, 1), ConfigError);
  EXPECT_THROW(Split(d, 0.01, 1), ConfigError);
}

TEST(SubsampleTest, SizeAndOrder) {
  Dataset d;
  d.features = Tensor::Zeros({100, 1});
  for (std::size_t i = 0; i < 100; ++i) d.features[i] = static_cast<double>(i);
  const Dataset s = Subsample(d, 10, 3);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.features.data().begin(), s.features.data().end()));
  EXPECT_EQ(Subsample(d, 1000, 3).size(), 100u);
}

TEST(CsvTest, HeaderAndRows) {
  std::ostringstream out;
  WriteCsv(out, MakeTwoMoons(2, 0.0, 1));
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x0,x1,label");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

}  // namespace
}  // namespace duq
