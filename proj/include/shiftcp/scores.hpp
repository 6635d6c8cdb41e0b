/*
 * Copyright 2026 The shiftcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Nonconformity scores for classification. Canonical orientation throughout
// the library: larger score = less conforming.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shiftcp {

enum class ScoreKind { kThr, kAps, kRaps };

std::string_view to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view name);

struct ScoreParams {
  double lambda = 0.01;     // RAPS penalty weight
  std::size_t k_reg = 5;    // RAPS free ranks
  bool randomized = false;  // APS/RAPS tie randomization
};

inline constexpr double kProbabilitySumTolerance = 1e-6;

/// Throws ValidationError unless p has K >= 2 entries in [0, 1] summing to 1
/// within `sum_tolerance`.
void validate_probabilities(std::span<const double> p,
                            double sum_tolerance = kProbabilitySumTolerance);

/// Max-subtracted softmax. Throws ValidationError naming the first
/// non-finite logit.
std::vector<double> softmax(std::span<const double> logits);

/// 1-based position of y in the order (descending probability, ascending
/// label index).
std::size_t label_rank(std::span<const double> p, std::size_t y);

double thr_score(std::span<const double> p, std::size_t y);

/// Sum of the probabilities ranked at or above y, accumulated in rank order.
/// When randomized, u * p_y is subtracted.
double aps_score(std::span<const double> p, std::size_t y, bool randomized = false,
                 double u = 0.0);

double raps_score(std::span<const double> p, std::size_t y, double lambda,
                  std::size_t k_reg, bool randomized = false, double u = 0.0);

/// Scores every candidate label; `u` is the single per-sample draw shared by
/// all labels (ignored unless params.randomized).
std::vector<double> score_all_labels(std::span<const double> p, ScoreKind kind,
                                     const ScoreParams& params, double u = 0.0);

/// Per-sample uniform draw used for randomized scores. Pure function of
/// (seed, sample index) so that parallel evaluation matches serial.
double score_noise(std::uint64_t seed, std::size_t sample);

/// Row-major N x K matrix of validated probability vectors.
class ProbabilityMatrix {
 public:
  ProbabilityMatrix() = default;
  ProbabilityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                    double sum_tolerance = kProbabilitySumTolerance);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Row-major N x K nonconformity scores tagged with how they were produced.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t rows, std::size_t cols, ScoreKind kind, bool randomized);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  ScoreKind kind() const { return kind_; }
  bool randomized() const { return randomized_; }

  double at(std::size_t i, std::size_t y) const { return values_[i * cols_ + y]; }
  double& at(std::size_t i, std::size_t y) { return values_[i * cols_ + y]; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  ScoreKind kind_ = ScoreKind::kThr;
  bool randomized_ = false;
  std::vector<double> values_;
};

/// Scores all samples, OpenMP-parallel over rows.
ScoreMatrix score_matrix(const ProbabilityMatrix& probs, ScoreKind kind,
                         const ScoreParams& params, std::uint64_t seed = 0);

/// Picks s(x_i, y_i) for each row.
std::vector<double> true_label_scores(const ScoreMatrix& scores, std::span<const int> labels);

namespace serial {
ScoreMatrix score_matrix(const ProbabilityMatrix& probs, ScoreKind kind,
                         const ScoreParams& params, std::uint64_t seed = 0);
}  // namespace serial

}  // namespace shiftcp
