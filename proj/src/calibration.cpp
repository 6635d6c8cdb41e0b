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

#include "shiftcp/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "shiftcp/error.hpp"

namespace shiftcp {

namespace {

// Relative slack on the weighted mass condition. Rescaling the weights by a
// constant perturbs partial sums by a few ulps; without slack an exact tie
// such as mass 3 of 4 at alpha = 0.25 could flip with the scale.
constexpr double kMassRelTolerance = 1e-12;

void check_alpha(double alpha) {
  require(alpha > 0.0 && alpha < 1.0,
          "alpha must lie in (0, 1), got " + std::to_string(alpha));
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kSplit: return "split";
    case Method::kRlscp: return "rlscp";
    case Method::kWqlcp: return "wqlcp";
    case Method::kWcpOracle: return "wcp-oracle";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "split") return Method::kSplit;
  if (name == "rlscp") return Method::kRlscp;
  if (name == "wqlcp") return Method::kWqlcp;
  if (name == "wcp-oracle") return Method::kWcpOracle;
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected split, rlscp, wqlcp or wcp-oracle)");
}

std::string_view to_string(WeightMode mode) {
  return mode == WeightMode::kPerSample ? "per-sample" : "aggregate";
}

WeightMode parse_weight_mode(std::string_view name) {
  if (name == "per-sample") return WeightMode::kPerSample;
  if (name == "aggregate") return WeightMode::kAggregate;
  throw ValidationError("unknown weight mode '" + std::string(name) +
                        "' (expected per-sample or aggregate)");
}

std::string_view to_string(LossNormalizer mode) {
  return mode == LossNormalizer::kMean ? "mean" : "quantile";
}

LossNormalizer parse_loss_normalizer(std::string_view name) {
  if (name == "mean") return LossNormalizer::kMean;
  if (name == "quantile") return LossNormalizer::kQuantile;
  throw ValidationError("unknown loss normalizer '" + std::string(name) +
                        "' (expected mean or quantile)");
}

void CalibrationSet::validate() const {
  require(!scores.empty(), "calibration set is empty");
  for (std::size_t j = 0; j < scores.size(); ++j) {
    require(std::isfinite(scores[j]),
            "calibration score at index " + std::to_string(j) + " is not finite");
  }
  if (losses) {
    require(losses->size() == scores.size(),
            "calibration losses (" + std::to_string(losses->size()) +
                ") are not aligned with scores (" + std::to_string(scores.size()) + ")");
    for (std::size_t j = 0; j < losses->size(); ++j) {
      const double l = (*losses)[j];
      require(std::isfinite(l) && l >= 0.0,
              "calibration loss at index " + std::to_string(j) + " must be finite and >= 0");
    }
  }
}

CalibrationSet make_calibration_set(const ScoreMatrix& scores, std::span<const int> labels,
                                    std::optional<std::vector<double>> losses) {
  CalibrationSet cal;
  cal.kind = scores.kind();
  cal.scores = true_label_scores(scores, labels);
  cal.losses = std::move(losses);
  cal.validate();
  return cal;
}

void TestBatch::validate(bool need_losses) const {
  require(scores.rows() >= 1, "test batch is empty");
  if (need_losses) {
    require(!losses.empty(),
            "this method needs test reconstruction losses; run `vae losses` or supply a "
            "loss file");
    require(losses.size() == scores.rows(), "test losses are not aligned with test scores");
    for (std::size_t i = 0; i < losses.size(); ++i) {
      require(std::isfinite(losses[i]) && losses[i] >= 0.0,
              "test loss at index " + std::to_string(i) + " must be finite and >= 0");
    }
    require(std::isfinite(normalizer) && normalizer > 0.0, "loss normalizer must be > 0");
  }
}

std::size_t order_statistic_index(double fraction, std::size_t count) {
  const double x = fraction * static_cast<double>(count);
  const auto k = static_cast<std::size_t>(std::ceil(x * (1.0 - 1e-12)));
  return std::max<std::size_t>(k, 1);
}

double split_threshold(std::span<const double> scores, double alpha) {
  check_alpha(alpha);
  require(!scores.empty(), "split_threshold: calibration set is empty");
  const std::size_t n = scores.size();
  const std::size_t k = order_statistic_index(1.0 - alpha, n + 1);
  if (k > n) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end());
  return sorted[k - 1];
}

SortedScores::SortedScores(std::span<const double> scores)
    : sorted_(scores.size()), order_(scores.size()) {
  require(!scores.empty(), "weighted quantile of an empty score set");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  for (std::size_t r = 0; r < order_.size(); ++r) sorted_[r] = scores[order_[r]];
}

namespace {

template <typename WeightAt>
double sweep(const std::vector<double>& sorted, const std::vector<std::size_t>& order,
             double alpha, WeightAt weight_at) {
  // Prefix masses in sorted order; the total is the last prefix so both sides
  // of the comparison share one summation order.
  std::vector<double> prefix(order.size());
  double running = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    running += weight_at(order[r]);
    prefix[r] = running;
  }
  const double target = (1.0 - alpha) * running * (1.0 - kMassRelTolerance);
  for (std::size_t r = 0; r < sorted.size(); ++r) {
    // Mass at q = sorted[r] includes every tied score.
    if (r + 1 < sorted.size() && sorted[r + 1] == sorted[r]) continue;
    if (prefix[r] >= target) return sorted[r];
  }
  return sorted.back();
}

}  // namespace

double SortedScores::quantile(std::span<const double> weights, double alpha) const {
  check_alpha(alpha);
  require(weights.size() == order_.size(), "weights and scores differ in length");
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0) || !std::isfinite(weights[j])) {
      throw ValidationError("weight at index " + std::to_string(j) +
                            " must be finite and > 0");
    }
  }
  return sweep(sorted_, order_, alpha, [&](std::size_t j) { return weights[j]; });
}

double SortedScores::quantile_scaled(std::span<const double> base, double denominator,
                                     double alpha) const {
  check_alpha(alpha);
  require(base.size() == order_.size(), "weights and scores differ in length");
  require(denominator > 0.0 && std::isfinite(denominator), "weight denominator must be > 0");
  return sweep(sorted_, order_, alpha,
               [&](std::size_t j) { return base[j] / denominator; });
}

double weighted_quantile(std::span<const double> scores, std::span<const double> weights,
                         double alpha) {
  require(!scores.empty(), "weighted quantile of an empty score set");
  require(scores.size() == weights.size(), "weights and scores differ in length");
  return SortedScores(scores).quantile(weights, alpha);
}

double rl_threshold(std::span<const double> test_losses, double alpha, double normalizer) {
  check_alpha(alpha);
  require(!test_losses.empty(), "rl_threshold: test batch is empty");
  require(normalizer > 0.0 && std::isfinite(normalizer), "loss normalizer must be > 0");
  std::vector<double> normalized(test_losses.size());
  for (std::size_t i = 0; i < test_losses.size(); ++i) {
    normalized[i] = test_losses[i] / normalizer;
  }
  const std::size_t k = order_statistic_index(1.0 - alpha, normalized.size());
  std::nth_element(normalized.begin(),
                   normalized.begin() + static_cast<std::ptrdiff_t>(k - 1), normalized.end());
  return normalized[k - 1];
}

double loss_normalizer(std::span<const double> cal_losses, LossNormalizer mode, double alpha) {
  require(!cal_losses.empty(), "loss normalizer needs calibration losses");
  double value = 0.0;
  if (mode == LossNormalizer::kMean) {
    for (double l : cal_losses) value += l;
    value /= static_cast<double>(cal_losses.size());
  } else {
    value = rl_threshold(cal_losses, alpha, 1.0);
  }
  require(value > 0.0 && std::isfinite(value),
          "calibration losses give a non-positive normalizer");
  return value;
}

namespace {

std::vector<double> clamped_losses(std::span<const double> cal_losses, double epsilon) {
  std::vector<double> out(cal_losses.size());
  for (std::size_t j = 0; j < cal_losses.size(); ++j) {
    require(cal_losses[j] >= 0.0 && std::isfinite(cal_losses[j]),
            "calibration loss at index " + std::to_string(j) + " must be finite and >= 0");
    out[j] = std::max(cal_losses[j], epsilon);
  }
  return out;
}

void check_epsilon(double epsilon) {
  require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be > 0");
}

}  // namespace

std::vector<double> wqlcp_weights(std::span<const double> cal_losses, double test_loss,
                                  double epsilon) {
  check_epsilon(epsilon);
  require(test_loss >= 0.0 && std::isfinite(test_loss), "test loss must be finite and >= 0");
  auto w = clamped_losses(cal_losses, epsilon);
  const double denominator = test_loss + epsilon;
  for (double& v : w) v /= denominator;
  return w;
}

namespace {

LabelSet set_for_row(const ScoreMatrix& scores, std::size_t i, double q, double scale) {
  LabelSet members;
  const auto row = scores.row(i);
  for (std::size_t y = 0; y < row.size(); ++y) {
    if (row[y] / scale <= q) members.push_back(static_cast<int>(y));
  }
  return members;
}

void check_assemble_args(const ScoreMatrix& scores, std::span<const double> q, double scale) {
  require(q.size() == 1 || q.size() == scores.rows(),
          "threshold count must be 1 or one per test sample");
  require(scale >= 1.0, "score scale must be >= 1");
}

}  // namespace

std::vector<LabelSet> assemble_sets(const ScoreMatrix& scores, std::span<const double> q,
                                    double scale) {
  check_assemble_args(scores, q, scale);
  std::vector<LabelSet> sets(scores.rows());
  const auto n = static_cast<std::ptrdiff_t>(scores.rows());
  const bool shared = q.size() == 1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    sets[row] = set_for_row(scores, row, shared ? q[0] : q[row], scale);
  }
  return sets;
}

std::vector<double> wqlcp_thresholds(std::span<const double> cal_scores,
                                     std::span<const double> cal_losses,
                                     std::span<const double> test_losses, double alpha,
                                     double epsilon) {
  check_epsilon(epsilon);
  const SortedScores sorted(cal_scores);
  const auto base = clamped_losses(cal_losses, epsilon);
  std::vector<double> q(test_losses.size());
  const auto n = static_cast<std::ptrdiff_t>(test_losses.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    q[row] = sorted.quantile_scaled(base, test_losses[row] + epsilon, alpha);
  }
  return q;
}

namespace serial {

std::vector<LabelSet> assemble_sets(const ScoreMatrix& scores, std::span<const double> q,
                                    double scale) {
  check_assemble_args(scores, q, scale);
  std::vector<LabelSet> sets(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    sets[i] = set_for_row(scores, i, q.size() == 1 ? q[0] : q[i], scale);
  }
  return sets;
}

std::vector<double> wqlcp_thresholds(std::span<const double> cal_scores,
                                     std::span<const double> cal_losses,
                                     std::span<const double> test_losses, double alpha,
                                     double epsilon) {
  std::vector<double> q(test_losses.size());
  for (std::size_t i = 0; i < test_losses.size(); ++i) {
    q[i] = weighted_quantile(cal_scores, wqlcp_weights(cal_losses, test_losses[i], epsilon),
                             alpha);
  }
  return q;
}

}  // namespace serial

namespace {

void check_pair(const TestBatch& test, const CalibrationSet& cal, bool need_losses) {
  cal.validate();
  test.validate(need_losses);
  require(test.scores.kind() == cal.kind,
          std::string("score kind mismatch: calibration uses ") +
              std::string(to_string(cal.kind)) + ", test uses " +
              std::string(to_string(test.scores.kind())));
  if (need_losses) {
    require(cal.losses.has_value(),
            "calibration reconstruction losses are missing; run `vae losses` on the "
            "calibration split or supply a loss file");
  }
}

}  // namespace

PredictionSets splitcp_predict(const TestBatch& test, const CalibrationSet& cal, double alpha) {
  check_pair(test, cal, false);
  PredictionSets out;
  out.threshold = {split_threshold(cal.scores, alpha), alpha, Method::kSplit, 1.0, std::nullopt};
  const double q = out.threshold.q;
  out.sets = assemble_sets(test.scores, std::span<const double>(&q, 1));
  return out;
}

PredictionSets rlscp_predict(const TestBatch& test, const CalibrationSet& cal, double alpha) {
  check_pair(test, cal, false);
  test.validate(true);
  const double q = split_threshold(cal.scores, alpha);
  const double rl = rl_threshold(test.losses, alpha, test.normalizer);
  const double scale = std::max(1.0, rl);
  PredictionSets out;
  out.threshold = {q, alpha, Method::kRlscp, scale, rl};
  out.sets = assemble_sets(test.scores, std::span<const double>(&q, 1), scale);
  return out;
}

PredictionSets wqlcp_predict(const TestBatch& test, const CalibrationSet& cal, double alpha,
                             double epsilon, WeightMode mode) {
  check_pair(test, cal, true);
  check_epsilon(epsilon);
  const double rl = rl_threshold(test.losses, alpha, test.normalizer);
  const double scale = std::max(1.0, rl);
  PredictionSets out;
  if (mode == WeightMode::kPerSample) {
    out.per_sample_q = wqlcp_thresholds(cal.scores, *cal.losses, test.losses, alpha, epsilon);
    out.threshold = {out.per_sample_q.front(), alpha, Method::kWqlcp, scale, rl};
    out.sets = assemble_sets(test.scores, out.per_sample_q, scale);
  } else {
    const double q = weighted_quantile(cal.scores, wqlcp_weights(*cal.losses, rl, epsilon),
                                       alpha);
    out.threshold = {q, alpha, Method::kWqlcp, scale, rl};
    out.sets = assemble_sets(test.scores, std::span<const double>(&q, 1), scale);
  }
  return out;
}

PredictionSets wcp_oracle_predict(const TestBatch& test, const CalibrationSet& cal,
                                  double alpha, std::span<const double> density_ratios) {
  check_pair(test, cal, false);
  require(density_ratios.size() == cal.scores.size(),
          "density ratios are not aligned with the calibration set");
  const double q = weighted_quantile(cal.scores, density_ratios, alpha);
  PredictionSets out;
  out.threshold = {q, alpha, Method::kWcpOracle, 1.0, std::nullopt};
  out.sets = assemble_sets(test.scores, std::span<const double>(&q, 1));
  return out;
}

PredictionSets predict(Method method, const TestBatch& test, const CalibrationSet& cal,
                       double alpha, const MethodOptions& options) {
  switch (method) {
    case Method::kSplit: return splitcp_predict(test, cal, alpha);
    case Method::kRlscp: return rlscp_predict(test, cal, alpha);
    case Method::kWqlcp:
      return wqlcp_predict(test, cal, alpha, options.epsilon, options.weight_mode);
    case Method::kWcpOracle:
      return wcp_oracle_predict(test, cal, alpha, options.density_ratios);
  }
  throw ValidationError("unknown method");
}

}  // namespace shiftcp
