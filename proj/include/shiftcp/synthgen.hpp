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

// Synthetic Gaussian-mixture classification data with controllable covariate
// shift, a softmax probe classifier, and closed-form density ratios.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shiftcp/scores.hpp"

namespace shiftcp {

/// K isotropic Gaussian classes whose means sit evenly on a circle of the
/// given radius in the first two coordinates.
struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t dim = 8;
  double radius = 4.0;
  double sigma = 1.0;  // per-coordinate standard deviation
  std::size_t samples = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ShiftSpec {
  std::vector<double> mean_shift;  // empty means zero
  double cov_multiplier = 1.0;     // variance multiplier
  double angle = 0.0;              // radians, rotates coordinates 0 and 1
  double ood_fraction = 0.0;

  /// Mean shift of `magnitude` (Euclidean norm) along (1, ..., 1) / sqrt(d).
  static ShiftSpec diagonal(std::size_t dim, double magnitude);

  bool is_identity() const;
  void validate(std::size_t dim) const;
};

enum class Domain { kSource, kShifted };

struct SynthDataset {
  Eigen::MatrixXd features;  // N x d
  std::vector<int> labels;
  std::vector<std::string> ids;
  Domain domain = Domain::kSource;

  std::size_t size() const { return labels.size(); }
};

/// K x d matrix of class means.
Eigen::MatrixXd class_means(const SynthSpec& spec);

/// Samples from the shifted class-conditionals: x = R(mu_y + delta + sigma *
/// sqrt(m) * e), R the rotation. With probability ood_fraction a sample is
/// instead drawn uniformly from a box around the means and labelled by the
/// nearest shifted mean. Labels cycle 0..K-1 so classes stay balanced.
SynthDataset apply_shift(const SynthSpec& spec, const ShiftSpec& shift, std::uint64_t seed,
                         const std::string& id_prefix = "x");

/// apply_shift with the identity shift and spec.seed.
SynthDataset gen_source(const SynthSpec& spec, const std::string& id_prefix = "x");

/// Multinomial logistic regression.
struct ProbeModel {
  Eigen::MatrixXd weights;  // K x d
  Eigen::VectorXd bias;     // K

  ProbabilityMatrix predict(const Eigen::MatrixXd& features) const;
  double accuracy(const SynthDataset& data) const;
};

/// Full-batch gradient descent on mean cross-entropy. Throws NumericalError
/// if the loss becomes non-finite.
ProbeModel train_probe(const SynthDataset& train, double learning_rate = 0.5,
                       std::size_t epochs = 300, std::uint64_t seed = 0);

/// Equal-weight isotropic Gaussian mixture.
struct GaussianMixture {
  Eigen::MatrixXd means;  // K x d
  double sigma = 1.0;
};

GaussianMixture source_mixture(const SynthSpec& spec);
/// Throws ValidationError when the shift has an outlier component.
GaussianMixture shifted_mixture(const SynthSpec& spec, const ShiftSpec& shift);

double log_density(const GaussianMixture& mixture, const Eigen::VectorXd& x);

/// log p_shifted(x) - log p_source(x).
double oracle_log_density_ratio(const Eigen::VectorXd& x, const GaussianMixture& source,
                                const GaussianMixture& shifted);
double oracle_density_ratio(const Eigen::VectorXd& x, const GaussianMixture& source,
                            const GaussianMixture& shifted);

/// Ratios for every row, divided by their maximum (the quantile only sees
/// relative weights) and floored at the smallest normal double.
std::vector<double> normalized_density_ratios(const Eigen::MatrixXd& features,
                                              const GaussianMixture& source,
                                              const GaussianMixture& shifted);

}  // namespace shiftcp
