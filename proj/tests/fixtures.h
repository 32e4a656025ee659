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


// Small hand-built models and scratch directories for the unit suites.

#ifndef DUQ_TESTS_FIXTURES_H_
#define DUQ_TESTS_FIXTURES_H_

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "duq/model.h"
#include "duq/random.h"
#include "duq/tensor.h"

namespace duq::testing {

// One-layer extractor f(x) = x with m = d = 1, head W_c = head_weights[c],
// centroid size 1.
inline DuqModel ScalarDuqModel(std::vector<double> head_weights,
                               std::vector<double> centroids, double sigma,
                               double gamma = 0.99) {
  const std::size_t c = head_weights.size();
  DuqArchitecture arch{{1, 1}, 1, c};
  ParameterSet params{{"extractor.w0", Tensor::Matrix({{1.0}})},
                      {"extractor.b0", Tensor::Matrix({{0.0}})},
                      {"head.w", Tensor({1, c}, std::move(head_weights))}};
  CentroidState state;
  state.centroids = Tensor({c, 1}, centroids);
  state.sums = state.centroids;
  state.counts.assign(c, 1.0);
  state.gamma = gamma;
  return DuqModel::FromParts(std::move(arch), sigma, std::move(params), std::move(state));
}

inline Tensor UniformTensor(Shape shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t = Tensor::Zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("duq_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ignored;
    std::filesystem::remove_all(path_, ignored);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace duq::testing

#endif  // DUQ_TESTS_FIXTURES_H_
