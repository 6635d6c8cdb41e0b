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

#include "shiftcp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "shiftcp/error.hpp"
#include "shiftcp/rng.hpp"

namespace shiftcp {

void SynthSpec::validate() const {
  require(num_classes >= 2, "synthetic data needs at least 2 classes");
  require(dim >= 2, "synthetic data needs at least 2 dimensions");
  require(radius > 0.0 && std::isfinite(radius), "class-mean radius must be > 0");
  require(sigma > 0.0 && std::isfinite(sigma), "class standard deviation must be > 0");
}

ShiftSpec ShiftSpec::diagonal(std::size_t dim, double magnitude) {
  ShiftSpec shift;
  shift.mean_shift.assign(dim, magnitude / std::sqrt(static_cast<double>(dim)));
  return shift;
}

bool ShiftSpec::is_identity() const {
  const bool zero_mean =
      std::all_of(mean_shift.begin(), mean_shift.end(), [](double v) { return v == 0.0; });
  return zero_mean && cov_multiplier == 1.0 && angle == 0.0 && ood_fraction == 0.0;
}

void ShiftSpec::validate(std::size_t dim) const {
  require(mean_shift.empty() || mean_shift.size() == dim,
          "mean shift has " + std::to_string(mean_shift.size()) + " entries, expected " +
              std::to_string(dim));
  for (double v : mean_shift) require(std::isfinite(v), "mean shift must be finite");
  require(cov_multiplier > 0.0 && std::isfinite(cov_multiplier),
          "covariance multiplier must be > 0");
  require(std::isfinite(angle), "rotation angle must be finite");
  require(ood_fraction >= 0.0 && ood_fraction <= 1.0, "ood fraction must lie in [0, 1]");
}

Eigen::MatrixXd class_means(const SynthSpec& spec) {
  spec.validate();
  const auto k = static_cast<Eigen::Index>(spec.num_classes);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(spec.dim));
  for (Eigen::Index c = 0; c < k; ++c) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    means(c, 0) = spec.radius * std::cos(theta);
    means(c, 1) = spec.radius * std::sin(theta);
  }
  return means;
}

namespace {

Eigen::VectorXd shift_vector(const SynthSpec& spec, const ShiftSpec& shift) {
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim));
  for (std::size_t j = 0; j < shift.mean_shift.size(); ++j) {
    delta(static_cast<Eigen::Index>(j)) = shift.mean_shift[j];
  }
  return delta;
}

void rotate_first_plane(Eigen::Ref<Eigen::VectorXd> x, double angle) {
  if (angle == 0.0) return;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double x0 = x(0);
  const double x1 = x(1);
  x(0) = c * x0 - s * x1;
  x(1) = s * x0 + c * x1;
}

Eigen::MatrixXd shifted_means(const SynthSpec& spec, const ShiftSpec& shift) {
  Eigen::MatrixXd means = class_means(spec);
  const Eigen::VectorXd delta = shift_vector(spec, shift);
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    Eigen::VectorXd m = means.row(k).transpose() + delta;
    rotate_first_plane(m, shift.angle);
    means.row(k) = m.transpose();
  }
  return means;
}

int nearest_mean(const Eigen::MatrixXd& means, const Eigen::VectorXd& x) {
  Eigen::Index best = 0;
  (means.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

SynthDataset apply_shift(const SynthSpec& spec, const ShiftSpec& shift, std::uint64_t seed,
                         const std::string& id_prefix) {
  spec.validate();
  shift.validate(spec.dim);
  require(spec.samples >= 1, "requested an empty synthetic split");

  const Eigen::MatrixXd means = class_means(spec);
  const Eigen::MatrixXd moved = shifted_means(spec, shift);
  const Eigen::VectorXd delta = shift_vector(spec, shift);
  const double sd = spec.sigma * std::sqrt(shift.cov_multiplier);
  const double half_width = spec.radius + 3.0 * spec.sigma;
  const auto d = static_cast<Eigen::Index>(spec.dim);

  std::mt19937_64 engine(derive_seed(seed, SeedStream::kData));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthDataset out;
  out.domain = shift.is_identity() ? Domain::kSource : Domain::kShifted;
  out.features.resize(static_cast<Eigen::Index>(spec.samples), d);
  out.labels.resize(spec.samples);
  out.ids.resize(spec.samples);
  Eigen::VectorXd x(d);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const bool outlier = unit(engine) < shift.ood_fraction;
    int label = static_cast<int>(i % spec.num_classes);
    if (outlier) {
      for (Eigen::Index j = 0; j < d; ++j) {
        x(j) = delta(j) + half_width * (2.0 * unit(engine) - 1.0);
      }
      label = nearest_mean(moved, x);
    } else {
      for (Eigen::Index j = 0; j < d; ++j) {
        x(j) = means(label, j) + delta(j) + sd * normal(engine);
      }
      rotate_first_plane(x, shift.angle);
    }
    out.features.row(static_cast<Eigen::Index>(i)) = x.transpose();
    out.labels[i] = label;
    out.ids[i] = id_prefix + std::to_string(i);
  }
  return out;
}

SynthDataset gen_source(const SynthSpec& spec, const std::string& id_prefix) {
  return apply_shift(spec, ShiftSpec{}, spec.seed, id_prefix);
}

namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace

ProbabilityMatrix ProbeModel::predict(const Eigen::MatrixXd& features) const {
  require(features.cols() == weights.cols(), "probe: feature dimension mismatch");
  const Eigen::MatrixXd logits = (features * weights.transpose()).rowwise() + bias.transpose();
  const Eigen::MatrixXd probs = softmax_rows(logits);
  std::vector<double> values(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      values[static_cast<std::size_t>(i * probs.cols() + k)] = probs(i, k);
    }
  }
  return {static_cast<std::size_t>(probs.rows()), static_cast<std::size_t>(probs.cols()),
          std::move(values)};
}

double ProbeModel::accuracy(const SynthDataset& data) const {
  require(data.size() >= 1, "accuracy of an empty dataset");
  const Eigen::MatrixXd logits =
      (data.features * weights.transpose()).rowwise() + bias.transpose();
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (best == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ProbeModel train_probe(const SynthDataset& train, double learning_rate, std::size_t epochs,
                       std::uint64_t seed) {
  require(train.size() >= 1, "probe training set is empty");
  require(learning_rate > 0.0, "probe learning rate must be > 0");
  require(epochs >= 1, "probe epochs must be >= 1");
  const int max_label = *std::max_element(train.labels.begin(), train.labels.end());
  require(*std::min_element(train.labels.begin(), train.labels.end()) >= 0,
          "probe labels must be >= 0");
  const Eigen::Index k = std::max<Eigen::Index>(2, max_label + 1);
  const Eigen::Index d = train.features.cols();
  const double n = static_cast<double>(train.size());

  ProbeModel model;
  model.weights.resize(k, d);
  model.bias = Eigen::VectorXd::Zero(k);
  std::mt19937_64 engine(derive_seed(seed, SeedStream::kProbe));
  std::normal_distribution<double> init(0.0, 0.01);
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index r = 0; r < k; ++r) model.weights(r, c) = init(engine);
  }

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(train.size()), k);
  for (std::size_t i = 0; i < train.size(); ++i) {
    onehot(static_cast<Eigen::Index>(i), train.labels[i]) = 1.0;
  }

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const Eigen::MatrixXd logits =
        (train.features * model.weights.transpose()).rowwise() + model.bias.transpose();
    const Eigen::MatrixXd probs = softmax_rows(logits);
    const Eigen::MatrixXd residual = (probs - onehot) / n;
    if (!residual.allFinite()) {
      throw NumericalError("probe training diverged at epoch " + std::to_string(epoch + 1) +
                           " (learning rate " + std::to_string(learning_rate) + ")");
    }
    model.weights -= learning_rate * residual.transpose() * train.features;
    model.bias -= learning_rate * residual.colwise().sum().transpose();
  }
  if (!model.weights.allFinite() || !model.bias.allFinite()) {
    throw NumericalError("probe training produced non-finite parameters");
  }
  return model;
}

GaussianMixture source_mixture(const SynthSpec& spec) {
  return {class_means(spec), spec.sigma};
}

GaussianMixture shifted_mixture(const SynthSpec& spec, const ShiftSpec& shift) {
  shift.validate(spec.dim);
  require(shift.ood_fraction == 0.0,
          "density ratios have no closed form when the shift includes outliers");
  return {shifted_means(spec, shift), spec.sigma * std::sqrt(shift.cov_multiplier)};
}

double log_density(const GaussianMixture& mixture, const Eigen::VectorXd& x) {
  require(x.size() == mixture.means.cols(), "log_density: dimension mismatch");
  const double var = mixture.sigma * mixture.sigma;
  const Eigen::VectorXd exponents =
      -(mixture.means.rowwise() - x.transpose()).rowwise().squaredNorm() / (2.0 * var);
  const double peak = exponents.maxCoeff();
  const double lse = peak + std::log((exponents.array() - peak).exp().sum());
  const double d = static_cast<double>(x.size());
  return lse - std::log(static_cast<double>(mixture.means.rows())) -
         0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

double oracle_log_density_ratio(const Eigen::VectorXd& x, const GaussianMixture& source,
                                const GaussianMixture& shifted) {
  return log_density(shifted, x) - log_density(source, x);
}

double oracle_density_ratio(const Eigen::VectorXd& x, const GaussianMixture& source,
                            const GaussianMixture& shifted) {
  return std::exp(oracle_log_density_ratio(x, source, shifted));
}

std::vector<double> normalized_density_ratios(const Eigen::MatrixXd& features,
                                              const GaussianMixture& source,
                                              const GaussianMixture& shifted) {
  std::vector<double> logs(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    logs[static_cast<std::size_t>(i)] =
        oracle_log_density_ratio(features.row(i).transpose(), source, shifted);
  }
  const double peak = logs.empty() ? 0.0 : *std::max_element(logs.begin(), logs.end());
  std::vector<double> out(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    out[i] = std::max(std::exp(logs[i] - peak), std::numeric_limits<double>::min());
  }
  return out;
}

}  // namespace shiftcp
