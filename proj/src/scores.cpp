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

#include "shiftcp/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shiftcp/error.hpp"
#include "shiftcp/rng.hpp"

namespace shiftcp {

std::string_view to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kThr: return "thr";
    case ScoreKind::kAps: return "aps";
    case ScoreKind::kRaps: return "raps";
  }
  return "?";
}

ScoreKind parse_score_kind(std::string_view name) {
  if (name == "thr") return ScoreKind::kThr;
  if (name == "aps") return ScoreKind::kAps;
  if (name == "raps") return ScoreKind::kRaps;
  throw ValidationError("unknown score kind '" + std::string(name) +
                        "' (expected thr, aps or raps)");
}

void validate_probabilities(std::span<const double> p, double sum_tolerance) {
  require(p.size() >= 2, "probability vector needs at least 2 classes, got " +
                             std::to_string(p.size()));
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!std::isfinite(p[k]) || p[k] < 0.0 || p[k] > 1.0) {
      throw ValidationError("probability at index " + std::to_string(k) +
                            " is outside [0, 1]");
    }
    sum += p[k];
  }
  if (std::abs(sum - 1.0) > sum_tolerance) {
    throw ValidationError("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax of an empty vector");
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!std::isfinite(logits[k])) {
      throw ValidationError("non-finite logit at index " + std::to_string(k));
    }
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

void check_label(std::span<const double> p, std::size_t y) {
  if (y >= p.size()) {
    throw IndexError("label " + std::to_string(y) + " out of range for " +
                     std::to_string(p.size()) + " classes");
  }
}

// True when label a is ranked strictly before label b.
inline bool ranks_before(std::span<const double> p, std::size_t a, std::size_t b) {
  return p[a] > p[b] || (p[a] == p[b] && a < b);
}

std::vector<std::size_t> rank_order(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ranks_before(p, a, b); });
  return order;
}

}  // namespace

std::size_t label_rank(std::span<const double> p, std::size_t y) {
  check_label(p, y);
  std::size_t rank = 1;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (ranks_before(p, k, y)) ++rank;
  }
  return rank;
}

double thr_score(std::span<const double> p, std::size_t y) {
  check_label(p, y);
  return 1.0 - p[y];
}

double aps_score(std::span<const double> p, std::size_t y, bool randomized, double u) {
  check_label(p, y);
  // Accumulate in rank order so the value matches the prefix sums used by
  // score_all_labels bit for bit.
  std::vector<double> ahead;
  ahead.reserve(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (ranks_before(p, k, y)) ahead.push_back(p[k]);
  }
  std::sort(ahead.begin(), ahead.end(), std::greater<>());
  double cumulative = 0.0;
  for (double v : ahead) cumulative += v;
  cumulative += p[y];
  return randomized ? cumulative - u * p[y] : cumulative;
}

double raps_score(std::span<const double> p, std::size_t y, double lambda,
                  std::size_t k_reg, bool randomized, double u) {
  require(lambda >= 0.0, "RAPS lambda must be >= 0");
  const double base = aps_score(p, y, randomized, u);
  const std::size_t rank = label_rank(p, y);
  const double excess = rank > k_reg ? static_cast<double>(rank - k_reg) : 0.0;
  return base + lambda * excess;
}

std::vector<double> score_all_labels(std::span<const double> p, ScoreKind kind,
                                     const ScoreParams& params, double u) {
  std::vector<double> out(p.size());
  if (kind == ScoreKind::kThr) {
    for (std::size_t k = 0; k < p.size(); ++k) out[k] = 1.0 - p[k];
    return out;
  }
  require(kind != ScoreKind::kRaps || params.lambda >= 0.0, "RAPS lambda must be >= 0");
  const auto order = rank_order(p);
  double cumulative = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t y = order[r];
    cumulative += p[y];
    double s = params.randomized ? cumulative - u * p[y] : cumulative;
    if (kind == ScoreKind::kRaps) {
      const std::size_t rank = r + 1;
      const double excess =
          rank > params.k_reg ? static_cast<double>(rank - params.k_reg) : 0.0;
      s += params.lambda * excess;
    }
    out[y] = s;
  }
  return out;
}

double score_noise(std::uint64_t seed, std::size_t sample) {
  return to_unit_open(derive_seed(seed, SeedStream::kScoreNoise, sample));
}

ProbabilityMatrix::ProbabilityMatrix(std::size_t rows, std::size_t cols,
                                     std::vector<double> values, double sum_tolerance)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require(values_.size() == rows_ * cols_, "probability matrix size mismatch");
  for (std::size_t i = 0; i < rows_; ++i) {
    try {
      validate_probabilities(row(i), sum_tolerance);
    } catch (const ValidationError& e) {
      throw ValidationError("row " + std::to_string(i) + ": " + e.what());
    }
  }
}

ScoreMatrix::ScoreMatrix(std::size_t rows, std::size_t cols, ScoreKind kind,
                         bool randomized)
    : rows_(rows), cols_(cols), kind_(kind), randomized_(randomized),
      values_(rows * cols, 0.0) {}

namespace {

void fill_row(const ProbabilityMatrix& probs, ScoreMatrix& out, std::size_t i,
              ScoreKind kind, const ScoreParams& params, std::uint64_t seed) {
  const double u = params.randomized ? score_noise(seed, i) : 0.0;
  const auto scores = score_all_labels(probs.row(i), kind, params, u);
  std::copy(scores.begin(), scores.end(), out.row(i).begin());
}

}  // namespace

ScoreMatrix score_matrix(const ProbabilityMatrix& probs, ScoreKind kind,
                         const ScoreParams& params, std::uint64_t seed) {
  ScoreMatrix out(probs.rows(), probs.cols(), kind, params.randomized);
  const auto n = static_cast<std::ptrdiff_t>(probs.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    fill_row(probs, out, static_cast<std::size_t>(i), kind, params, seed);
  }
  return out;
}

namespace serial {

ScoreMatrix score_matrix(const ProbabilityMatrix& probs, ScoreKind kind,
                         const ScoreParams& params, std::uint64_t seed) {
  ScoreMatrix out(probs.rows(), probs.cols(), kind, params.randomized);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    fill_row(probs, out, i, kind, params, seed);
  }
  return out;
}

}  // namespace serial

std::vector<double> true_label_scores(const ScoreMatrix& scores, std::span<const int> labels) {
  require(labels.size() == scores.rows(), "label count does not match score rows");
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= scores.cols()) {
      throw IndexError("label " + std::to_string(y) + " out of range at row " +
                       std::to_string(i));
    }
    out[i] = scores.at(i, static_cast<std::size_t>(y));
  }
  return out;
}

}  // namespace shiftcp
