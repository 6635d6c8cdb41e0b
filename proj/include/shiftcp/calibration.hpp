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

// Threshold calibration and prediction-set assembly for split conformal
// prediction and its shift-aware variants: reconstruction-loss score scaling
// (RLSCP), loss-ratio weighted quantiles (WQLCP), and oracle-weighted WCP.
//
// All rules use nonconformity orientation. A label y enters the set of test
// sample i when  s(i, y) / c <= q,  where q is the calibrated threshold and
// c >= 1 the reconstruction-loss scale (1 for unscaled methods).

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "shiftcp/scores.hpp"

namespace shiftcp {

enum class Method { kSplit, kRlscp, kWqlcp, kWcpOracle };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

/// How the per-test-sample denominator of the loss-ratio weights is formed.
/// Both modes yield the same sets because the quantile is invariant to a
/// common positive rescaling of the weights.
enum class WeightMode { kPerSample, kAggregate };

std::string_view to_string(WeightMode mode);
WeightMode parse_weight_mode(std::string_view name);

inline constexpr double kDefaultEpsilon = 1e-8;

/// In-distribution loss scale that RL_test is expressed in. kMean divides by
/// the mean calibration loss; kQuantile by the calibration loss quantile at
/// the same level 1 - alpha used for RL_test.
enum class LossNormalizer { kMean, kQuantile };

std::string_view to_string(LossNormalizer mode);
LossNormalizer parse_loss_normalizer(std::string_view name);

double loss_normalizer(std::span<const double> cal_losses, LossNormalizer mode, double alpha);

struct CalibrationSet {
  ScoreKind kind = ScoreKind::kThr;
  std::vector<double> scores;                // s_j at the true label
  std::optional<std::vector<double>> losses;  // reconstruction losses, index-aligned

  void validate() const;
};

CalibrationSet make_calibration_set(const ScoreMatrix& scores, std::span<const int> labels,
                                    std::optional<std::vector<double>> losses = std::nullopt);

struct TestBatch {
  ScoreMatrix scores;
  std::vector<double> losses;  // may be empty for methods that ignore losses
  double normalizer = 1.0;     // in-distribution loss scale

  void validate(bool need_losses) const;
};

struct Threshold {
  double q = std::numeric_limits<double>::infinity();
  double alpha = 0.1;
  Method method = Method::kSplit;
  double scale = 1.0;  // max(1, RL_test); 1 for split and WCP
  std::optional<double> rl_test;
};

using LabelSet = std::vector<int>;  // ascending label indices

struct PredictionSets {
  std::vector<LabelSet> sets;
  Threshold threshold;
  // Filled in per-sample weight mode: the quantile computed for each test
  // sample. Identical up to the weight-scale invariance.
  std::vector<double> per_sample_q;
};

/// ceil(fraction * count) with a guard against representation error in the
/// product, clamped below at 1.
std::size_t order_statistic_index(double fraction, std::size_t count);

/// The ceil((1 - alpha)(n + 1))-th smallest score; +inf when that index
/// exceeds n.
double split_threshold(std::span<const double> scores, double alpha);

/// inf{ q : sum_j w_j 1{s_j <= q} >= (1 - alpha) sum_j w_j }. Always one of
/// the input scores.
double weighted_quantile(std::span<const double> scores, std::span<const double> weights,
                         double alpha);

/// Scores sorted once so the weighted quantile can be re-evaluated cheaply
/// for many weight vectors over the same calibration scores.
class SortedScores {
 public:
  explicit SortedScores(std::span<const double> scores);

  std::size_t size() const { return order_.size(); }
  /// Weighted quantile for `weights` indexed like the original scores.
  double quantile(std::span<const double> weights, double alpha) const;
  /// Same, with w_j = base_j / denominator computed on the fly.
  double quantile_scaled(std::span<const double> base, double denominator,
                         double alpha) const;

 private:
  std::vector<double> sorted_;
  std::vector<std::size_t> order_;
};

/// The ceil((1 - alpha) N)-th smallest of loss_i / normalizer.
double rl_threshold(std::span<const double> test_losses, double alpha, double normalizer);

/// w_j = loss_cal_j / (test_loss + epsilon); zero calibration losses are
/// clamped to epsilon so every weight is positive.
std::vector<double> wqlcp_weights(std::span<const double> cal_losses, double test_loss,
                                  double epsilon = kDefaultEpsilon);

/// Sets { y : s(i, y) / scale <= q_i }, OpenMP-parallel over test samples.
/// `q` holds one threshold shared by all samples or one per sample.
std::vector<LabelSet> assemble_sets(const ScoreMatrix& scores, std::span<const double> q,
                                    double scale = 1.0);

PredictionSets splitcp_predict(const TestBatch& test, const CalibrationSet& cal, double alpha);

PredictionSets rlscp_predict(const TestBatch& test, const CalibrationSet& cal, double alpha);

PredictionSets wqlcp_predict(const TestBatch& test, const CalibrationSet& cal, double alpha,
                             double epsilon = kDefaultEpsilon,
                             WeightMode mode = WeightMode::kPerSample);

PredictionSets wcp_oracle_predict(const TestBatch& test, const CalibrationSet& cal,
                                  double alpha, std::span<const double> density_ratios);

struct MethodOptions {
  double epsilon = kDefaultEpsilon;
  WeightMode weight_mode = WeightMode::kPerSample;
  std::vector<double> density_ratios;  // WCP only
};

PredictionSets predict(Method method, const TestBatch& test, const CalibrationSet& cal,
                       double alpha, const MethodOptions& options = {});

namespace serial {
std::vector<LabelSet> assemble_sets(const ScoreMatrix& scores, std::span<const double> q,
                                    double scale = 1.0);
/// Per-sample WQLCP thresholds, one weighted quantile per test sample.
std::vector<double> wqlcp_thresholds(std::span<const double> cal_scores,
                                     std::span<const double> cal_losses,
                                     std::span<const double> test_losses, double alpha,
                                     double epsilon);
}  // namespace serial

/// OpenMP-parallel version of serial::wqlcp_thresholds.
std::vector<double> wqlcp_thresholds(std::span<const double> cal_scores,
                                     std::span<const double> cal_losses,
                                     std::span<const double> test_losses, double alpha,
                                     double epsilon);

}  // namespace shiftcp
