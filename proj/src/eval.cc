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

#include "duq/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "duq/error.h"

namespace duq {
namespace {

struct Scored {
  double value;
  bool positive;
};

std::vector<Scored> Pool(std::span<const double> in, std::span<const double> out) {
  if (in.empty() || out.empty()) {
    throw ConfigError("AUROC needs nonempty in-distribution and OoD score lists");
  }
  std::vector<Scored> pool;
  pool.reserve(in.size() + out.size());
  for (double v : in) pool.push_back({v, true});
  for (double v : out) pool.push_back({v, false});
  for (const Scored& s : pool) {
    if (std::isnan(s.value)) throw NumericError("NaN confidence score");
  }
  return pool;
}

}  // namespace

double Auroc(std::span<const double> confidence_in,
             std::span<const double> confidence_out) {
  std::vector<Scored> pool = Pool(confidence_in, confidence_out);
  std::sort(pool.begin(), pool.end(),
            [](const Scored& a, const Scored& b) { return a.value < b.value; });
  // Twice the Mann-Whitney count: 2 per win, 1 per tie.
  std::uint64_t doubled = 0;
  std::uint64_t out_below = 0;
  for (std::size_t i = 0; i < pool.size();) {
    std::size_t j = i;
    std::uint64_t in_group = 0;
    std::uint64_t out_group = 0;
    while (j < pool.size() && pool[j].value == pool[i].value) {
      (pool[j].positive ? in_group : out_group) += 1;
      ++j;
    }
    doubled += 2 * in_group * out_below + in_group * out_group;
    out_below += out_group;
    i = j;
  }
  return static_cast<double>(doubled) * 0.5 /
         (static_cast<double>(confidence_in.size()) *
          static_cast<double>(confidence_out.size()));
}

RocCurve ComputeRocCurve(std::span<const double> confidence_in,
                         std::span<const double> confidence_out) {
  std::vector<Scored> pool = Pool(confidence_in, confidence_out);
  std::sort(pool.begin(), pool.end(),
            [](const Scored& a, const Scored& b) { return a.value > b.value; });
  const double n_pos = static_cast<double>(confidence_in.size());
  const double n_neg = static_cast<double>(confidence_out.size());
  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < pool.size();) {
    std::size_t j = i;
    while (j < pool.size() && pool[j].value == pool[i].value) {
      (pool[j].positive ? tp : fp) += 1;
      ++j;
    }
    curve.points.push_back({static_cast<double>(fp) / n_neg,
                            static_cast<double>(tp) / n_pos});
    i = j;
  }
  curve.auroc = Auroc(confidence_in, confidence_out);
  return curve;
}

double TrapezoidArea(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) *
            (points[i].tpr + points[i - 1].tpr) * 0.5;
  }
  return area;
}

double TheoreticalMaxAccuracy(std::size_t n_in, std::size_t n_ood,
                              std::size_t rejected) {
  const std::size_t total = n_in + n_ood;
  if (rejected >= total) return 1.0;
  if (rejected <= n_ood) {
    return static_cast<double>(n_in) / static_cast<double>(total - rejected);
  }
  return 1.0;
}

RejectionCurve ComputeRejectionCurve(std::span<const bool> correct_in,
                                     std::span<const double> confidence_in,
                                     std::span<const double> confidence_out,
                                     double step) {
  if (correct_in.size() != confidence_in.size()) {
    throw ShapeError("rejection curve: correctness flags and confidences differ in length");
  }
  const std::size_t n_in = confidence_in.size();
  const std::size_t n_ood = confidence_out.size();
  const std::size_t total = n_in + n_ood;
  if (total == 0) throw ConfigError("rejection curve needs a nonempty pool");
  const double inv_step = 1.0 / step;
  const auto steps = static_cast<std::size_t>(std::llround(inv_step));
  if (!(step > 0.0) || steps == 0 || std::abs(inv_step - static_cast<double>(steps)) > 1e-9) {
    throw ConfigError("rejection step must divide 1 evenly");
  }

  struct Entry {
    double confidence;
    bool correct;
  };
  std::vector<Entry> pool;
  pool.reserve(total);
  for (std::size_t i = 0; i < n_in; ++i) pool.push_back({confidence_in[i], correct_in[i]});
  for (double c : confidence_out) pool.push_back({c, false});
  std::stable_sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    return a.confidence < b.confidence;
  });
  // correct_from[k] = correct predictions among pool[k..).
  std::vector<std::size_t> correct_from(total + 1, 0);
  for (std::size_t k = total; k-- > 0;) {
    correct_from[k] = correct_from[k + 1] + (pool[k].correct ? 1 : 0);
  }

  RejectionCurve curve;
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t k = i * total / steps;
    if (k >= total) break;
    RejectionPoint p;
    p.fraction = static_cast<double>(i) / static_cast<double>(steps);
    p.accuracy = static_cast<double>(correct_from[k]) / static_cast<double>(total - k);
    p.theoretical_max = TheoreticalMaxAccuracy(n_in, n_ood, k);
    curve.points.push_back(p);
  }
  return curve;
}

std::vector<double> NormalizedHistogram(std::span<const double> values,
                                        std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (values.empty()) throw ConfigError("histogram of an empty list");
  std::vector<double> counts(bins, 0.0);
  for (double v : values) {
    const double scaled = std::floor(v * static_cast<double>(bins));
    const auto idx = static_cast<std::size_t>(
        std::clamp(scaled, 0.0, static_cast<double>(bins - 1)));
    counts[idx] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(values.size());
  return counts;
}

UncertaintyGrid ComputeUncertaintyGrid(const Scorer& scorer,
                                       std::pair<double, double> x_range,
                                       std::pair<double, double> y_range,
                                       std::size_t nx, std::size_t ny) {
  if (scorer.input_dim != 2) {
    throw ConfigError("uncertainty grid needs a model with 2 input features, got " +
                      std::to_string(scorer.input_dim));
  }
  if (nx < 2 || ny < 2) throw ConfigError("grid resolution must be at least 2x2");
  const auto coord = [](std::pair<double, double> r, std::size_t i, std::size_t n) {
    return r.first + (r.second - r.first) * static_cast<double>(i) /
                         static_cast<double>(n - 1);
  };
  Tensor lattice = Tensor::Zeros({nx * ny, 2});
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      lattice.at(j * nx + i, 0) = coord(x_range, i, nx);
      lattice.at(j * nx + i, 1) = coord(y_range, j, ny);
    }
  }
  const std::vector<double> values = scorer.score(lattice);
  if (values.size() != nx * ny) throw ShapeError("scorer returned the wrong count");

  UncertaintyGrid grid;
  grid.nx = nx;
  grid.ny = ny;
  grid.points.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    grid.points.push_back({lattice.at(k, 0), lattice.at(k, 1), values[k]});
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  grid.min_value = *lo;
  grid.max_value = *hi;
  return grid;
}

SelectionResult PickBest(std::vector<SelectionRow> rows) {
  if (rows.empty()) throw ConfigError("selection grid is empty");
  const SelectionRow* best = nullptr;
  for (const SelectionRow& r : rows) {
    if (r.error) continue;
    if (best == nullptr || r.mean > best->mean ||
        (r.mean == best->mean && r.value < best->value)) {
      best = &r;
    }
  }
  if (best == nullptr) throw NumericError("no grid value produced a usable score");
  SelectionResult out;
  out.best = best->value;
  out.rows = std::move(rows);
  return out;
}

namespace {

SelectionResult Sweep(std::span<const double> grid, std::size_t repeats,
                      const std::function<double(double, std::size_t)>& score,
                      bool tolerate_errors) {
  if (grid.empty()) throw ConfigError("selection grid is empty");
  if (repeats == 0) throw ConfigError("selection needs at least one repeat");
  std::vector<SelectionRow> rows;
  for (double v : grid) {
    SelectionRow row;
    row.value = v;
    try {
      for (std::size_t r = 0; r < repeats; ++r) row.scores.push_back(score(v, r));
      row.mean = std::accumulate(row.scores.begin(), row.scores.end(), 0.0) /
                 static_cast<double>(row.scores.size());
    } catch (const Error& e) {
      if (!tolerate_errors) throw;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return PickBest(std::move(rows));
}

}  // namespace

SelectionResult SelectSigma(std::span<const double> sigma_grid, std::size_t repeats,
                            const std::function<double(double, std::size_t)>&
                                validation_accuracy) {
  for (double s : sigma_grid) {
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("sigma grid values must lie in (0, 1]");
  }
  return Sweep(sigma_grid, repeats, validation_accuracy, false);
}

SelectionResult SelectLambda(std::span<const double> lambda_grid, std::size_t repeats,
                             const std::function<double(double, std::size_t)>& auroc) {
  for (double l : lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("lambda grid values must be >= 0");
  }
  return Sweep(lambda_grid, repeats, auroc, true);
}

double MisclassificationAuroc(std::span<const bool> correct,
                              std::span<const double> confidence) {
  if (correct.size() != confidence.size()) {
    throw ShapeError("correctness flags and confidences differ in length");
  }
  std::vector<double> right;
  std::vector<double> wrong;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    (correct[i] ? right : wrong).push_back(confidence[i]);
  }
  if (right.empty() || wrong.empty()) {
    throw NumericError("misclassification AUROC undefined: " +
                       std::string(wrong.empty() ? "no incorrect" : "no correct") +
                       " predictions");
  }
  return Auroc(right, wrong);
}

}  // namespace duq
