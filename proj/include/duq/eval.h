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

// Out-of-distribution evaluation. Every score is a confidence: higher means
// the model considers the point more in-distribution.

#ifndef DUQ_EVAL_H_
#define DUQ_EVAL_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "duq/tensor.h"

namespace duq {

// P(random in-distribution confidence > random OoD confidence), ties
// counted as 1/2. Exact rank statistic.
double Auroc(std::span<const double> confidence_in,
             std::span<const double> confidence_out);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auroc = 0.0;
};

// One point per distinct score, thresholds descending; in-distribution is
// the positive class.
RocCurve ComputeRocCurve(std::span<const double> confidence_in,
                         std::span<const double> confidence_out);

// Trapezoidal area under a curve.
double TrapezoidArea(std::span<const RocPoint> points);

struct RejectionPoint {
  double fraction = 0.0;
  double accuracy = 0.0;
  double theoretical_max = 0.0;
};

struct RejectionCurve {
  std::vector<RejectionPoint> points;
};

// Accuracy on the pooled in + OoD set (OoD points always count as wrong)
// after rejecting the floor(r * N) lowest-confidence points, for r on a grid
// of `step` up to (excluding) the point where nothing is left. Ties in
// confidence are rejected in pool order: in-distribution points first, each
// list in its given order.
RejectionCurve ComputeRejectionCurve(std::span<const bool> correct_in,
                                     std::span<const double> confidence_in,
                                     std::span<const double> confidence_out,
                                     double step = 0.005);

// Upper bound from a perfect classifier that rejects all OoD points first.
double TheoreticalMaxAccuracy(std::size_t n_in, std::size_t n_ood, std::size_t rejected);

// Equal-width bins over [0, 1] (values outside are clamped to the end bins),
// normalised to sum to 1.
std::vector<double> NormalizedHistogram(std::span<const double> values,
                                        std::size_t bins = 50);

struct GridPoint {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

struct UncertaintyGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<GridPoint> points;  // x varies fastest
  double min_value = 0.0;
  double max_value = 0.0;
};

struct Scorer {
  std::size_t input_dim = 0;
  std::function<std::vector<double>(const Tensor&)> score;
};

// Evaluates `scorer` on an nx-by-ny lattice spanning the closed ranges.
UncertaintyGrid ComputeUncertaintyGrid(const Scorer& scorer,
                                       std::pair<double, double> x_range,
                                       std::pair<double, double> y_range,
                                       std::size_t nx, std::size_t ny);

// One row of a hyperparameter sweep.
struct SelectionRow {
  double value = 0.0;                 // sigma or lambda
  std::vector<double> scores;         // per repeat
  double mean = 0.0;
  std::optional<std::string> error;   // set when the score was undefined
};

struct SelectionResult {
  std::vector<SelectionRow> rows;
  double best = 0.0;
};

// Highest mean wins; ties go to the smaller value; rows with an error are
// skipped. Throws if no row is usable.
SelectionResult PickBest(std::vector<SelectionRow> rows);

// Length-scale search: `validation_accuracy(sigma, repeat)` trains one model
// with the penalty disabled and reports its validation accuracy.
SelectionResult SelectSigma(std::span<const double> sigma_grid, std::size_t repeats,
                            const std::function<double(double, std::size_t)>&
                                validation_accuracy);

enum class LambdaSelectionMode { kInDistribution, kThirdDataset };

// Penalty-weight search: `auroc(lambda, repeat)` trains and returns the
// selection AUROC; a thrown duq::Error marks that lambda as undefined.
SelectionResult SelectLambda(std::span<const double> lambda_grid, std::size_t repeats,
                             const std::function<double(double, std::size_t)>& auroc);

// AUROC separating correctly from incorrectly classified points by
// confidence. Throws when either group is empty.
double MisclassificationAuroc(std::span<const bool> correct,
                              std::span<const double> confidence);

}  // namespace duq

#endif  // DUQ_EVAL_H_
