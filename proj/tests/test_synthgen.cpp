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

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "shiftcp/error.hpp"
#include "shiftcp/synthgen.hpp"

namespace shiftcp {
namespace {

SynthSpec small_spec(std::size_t n, std::uint64_t seed) {
  SynthSpec s;
  s.samples = n;
  s.seed = seed;
  return s;
}

// Mixture density evaluated directly in long double from the generator's
// definition: x = R(mu_y + delta + sigma sqrt(m) e).
long double direct_density(const SynthSpec& spec, const ShiftSpec& shift,
                           const Eigen::VectorXd& x) {
  const long double pi = std::numbers::pi_v<long double>;
  const long double sd = spec.sigma * std::sqrt(static_cast<long double>(shift.cov_multiplier));
  const auto d = static_cast<long double>(spec.dim);
  const long double c = std::cos(static_cast<long double>(shift.angle));
  const long double s = std::sin(static_cast<long double>(shift.angle));
  long double total = 0.0L;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const long double theta = 2.0L * pi * k / spec.num_classes;
    long double sq = 0.0L;
    std::vector<long double> m(spec.dim, 0.0L);
    m[0] = spec.radius * std::cos(theta);
    m[1] = spec.radius * std::sin(theta);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      if (!shift.mean_shift.empty()) m[j] += shift.mean_shift[j];
    }
    const long double r0 = c * m[0] - s * m[1];
    const long double r1 = s * m[0] + c * m[1];
    m[0] = r0;
    m[1] = r1;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const long double diff = x[static_cast<Eigen::Index>(j)] - m[j];
      sq += diff * diff;
    }
    total += std::exp(-sq / (2.0L * sd * sd));
  }
  return total / spec.num_classes / std::pow(2.0L * pi * sd * sd, d / 2.0L);
}

TEST(SynthSource, DeterministicInSeed) {
  const auto a = gen_source(small_spec(200, 5));
  const auto b = gen_source(small_spec(200, 5));
  const auto c = gen_source(small_spec(200, 6));
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_NE(a.features, c.features);
}

TEST(SynthSource, BalancedLabelsAndRequestedSize) {
  const auto a = gen_source(small_spec(1003, 1), "cal");
  ASSERT_EQ(a.size(), 1003u);
  EXPECT_EQ(a.features.rows(), 1003);
  EXPECT_EQ(a.features.cols(), 8);
  std::vector<int> counts(10, 0);
  for (int y : a.labels) ++counts[static_cast<std::size_t>(y)];
  for (int k = 0; k < 10; ++k) EXPECT_EQ(counts[k], k < 3 ? 101 : 100);
  EXPECT_EQ(a.ids.front(), "cal0");
  EXPECT_EQ(a.domain, Domain::kSource);
}

TEST(SynthSource, ClassMeansOnCircle) {
  const SynthSpec spec;
  const Eigen::MatrixXd m = class_means(spec);
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    EXPECT_NEAR(m.row(k).norm(), spec.radius, 1e-12);
    EXPECT_EQ(m.row(k).tail(6).norm(), 0.0);
  }
}

TEST(SynthSource, EmpiricalMomentsMatchSpec) {
  const auto a = gen_source(small_spec(20000, 2));
  const Eigen::MatrixXd means = class_means(SynthSpec{});
  Eigen::MatrixXd centered = a.features;
  for (Eigen::Index i = 0; i < centered.rows(); ++i) {
    centered.row(i) -= means.row(a.labels[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd mean = centered.colwise().mean();
  const Eigen::VectorXd var = centered.array().square().colwise().mean();
  for (Eigen::Index j = 0; j < 8; ++j) {
    EXPECT_NEAR(mean[j], 0.0, 0.03);
    EXPECT_NEAR(var[j], 1.0, 0.04);
  }
}

TEST(SynthShift, IdentityShiftIsTheSourceGenerator) {
  const SynthSpec spec = small_spec(300, 77);
  const auto source = gen_source(spec);
  const auto shifted = apply_shift(spec, ShiftSpec{}, spec.seed);
  EXPECT_EQ(source.features, shifted.features);
  EXPECT_EQ(source.labels, shifted.labels);
  EXPECT_TRUE(ShiftSpec{}.is_identity());
  EXPECT_TRUE(ShiftSpec::diagonal(8, 0.0).is_identity());
}

TEST(SynthShift, DiagonalShiftMovesTheMean) {
  const ShiftSpec s = ShiftSpec::diagonal(8, 4.0);
  double norm = 0.0;
  for (double v : s.mean_shift) {
    EXPECT_DOUBLE_EQ(v, 4.0 / std::sqrt(8.0));
    norm += v * v;
  }
  EXPECT_NEAR(std::sqrt(norm), 4.0, 1e-12);
  const SynthSpec spec = small_spec(20000, 3);
  const auto src = gen_source(spec);
  const auto dst = apply_shift(spec, s, 3);
  const Eigen::VectorXd gap = dst.features.colwise().mean() - src.features.colwise().mean();
  for (Eigen::Index j = 0; j < 8; ++j) EXPECT_NEAR(gap[j], s.mean_shift[j], 0.05);
  EXPECT_EQ(dst.domain, Domain::kShifted);
}

TEST(SynthShift, OutliersFillTheBox) {
  SynthSpec spec = small_spec(4000, 4);
  ShiftSpec s = ShiftSpec::diagonal(8, 2.0);
  s.ood_fraction = 1.0;
  const auto data = apply_shift(spec, s, 9);
  const double half = spec.radius + 3.0 * spec.sigma;
  const GaussianMixture moved = shifted_mixture(spec, ShiftSpec::diagonal(8, 2.0));
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) {
      EXPECT_LE(std::abs(data.features(i, j) - s.mean_shift[static_cast<std::size_t>(j)]), half);
    }
    Eigen::Index nearest = 0;
    (moved.means.rowwise() - data.features.row(i)).rowwise().squaredNorm().minCoeff(&nearest);
    EXPECT_EQ(data.labels[static_cast<std::size_t>(i)], nearest);
  }
  // Uniform on [-h, h] has variance h^2 / 3.
  const Eigen::VectorXd centered_var =
      (data.features.rowwise() - data.features.colwise().mean()).array().square().colwise().mean();
  EXPECT_NEAR(centered_var[5] / (half * half / 3.0), 1.0, 0.08);
}

TEST(SynthShift, RejectsInvalidShift) {
  ShiftSpec s;
  s.ood_fraction = 1.5;
  EXPECT_THROW(s.validate(8), ValidationError);
  s = ShiftSpec{};
  s.cov_multiplier = 0.0;
  EXPECT_THROW(s.validate(8), ValidationError);
  s = ShiftSpec::diagonal(3, 1.0);
  EXPECT_THROW(s.validate(8), ValidationError);
  s = ShiftSpec{};
  s.ood_fraction = 0.2;
  EXPECT_THROW(shifted_mixture(SynthSpec{}, s), ValidationError);
  SynthSpec bad;
  bad.num_classes = 1;
  EXPECT_THROW(gen_source(bad), ValidationError);
}

TEST(Probe, SeparableDataIsLearned) {
  SynthSpec spec = small_spec(600, 8);
  spec.num_classes = 2;
  spec.radius = 50.0;
  spec.sigma = 0.05;
  const auto train = gen_source(spec);
  const ProbeModel probe = train_probe(train, 0.5, 300, 1);
  EXPECT_GE(probe.accuracy(train), 0.99);
  const auto probs = probe.predict(train.features);
  EXPECT_EQ(probs.rows(), 600u);
  EXPECT_EQ(probs.cols(), 2u);
}

TEST(Probe, AccuracyDropsAlongTheShiftLadder) {
  const SynthSpec spec = small_spec(2000, 10);
  const ProbeModel probe = train_probe(gen_source(spec), 0.5, 300, 2);
  std::vector<double> acc;
  for (double level : {0.0, 2.0, 4.0}) {
    acc.push_back(probe.accuracy(apply_shift(spec, ShiftSpec::diagonal(8, level), 77)));
  }
  EXPECT_GT(acc[0], acc[1]);
  EXPECT_GT(acc[1], acc[2]);
}

TEST(Probe, DeterministicInSeed) {
  const auto train = gen_source(small_spec(300, 12));
  const ProbeModel a = train_probe(train, 0.5, 50, 3);
  const ProbeModel b = train_probe(train, 0.5, 50, 3);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(DensityRatio, UnitUnderZeroShift) {
  const SynthSpec spec;
  const auto src = source_mixture(spec);
  const auto same = shifted_mixture(spec, ShiftSpec{});
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd x(8);
    for (Eigen::Index j = 0; j < 8; ++j) x[j] = g(rng);
    EXPECT_EQ(oracle_density_ratio(x, src, same), 1.0);
  }
}

TEST(DensityRatio, ModeDominance) {
  SynthSpec spec;
  spec.num_classes = 2;
  const ShiftSpec shift = ShiftSpec::diagonal(8, 3.0);
  const auto src = source_mixture(spec);
  const auto dst = shifted_mixture(spec, shift);
  const Eigen::VectorXd at_source = src.means.row(0).transpose();
  const Eigen::VectorXd at_shifted = dst.means.row(0).transpose();
  EXPECT_LT(oracle_density_ratio(at_source, src, dst), 1.0);
  EXPECT_GT(oracle_density_ratio(at_shifted, src, dst), 1.0);
}

TEST(DensityRatio, MatchesDirectEvaluation) {
  const SynthSpec spec;
  std::vector<ShiftSpec> shifts{ShiftSpec::diagonal(8, 2.0), ShiftSpec::diagonal(8, 1.0)};
  shifts[1].angle = 0.4;
  shifts[1].cov_multiplier = 1.5;
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 2.5);
  const auto src = source_mixture(spec);
  for (const ShiftSpec& shift : shifts) {
    const auto dst = shifted_mixture(spec, shift);
    for (int i = 0; i < 200; ++i) {
      Eigen::VectorXd x(8);
      for (Eigen::Index j = 0; j < 8; ++j) x[j] = g(rng);
      const long double expect = direct_density(spec, shift, x) / direct_density(spec, {}, x);
      const double got = oracle_density_ratio(x, src, dst);
      EXPECT_NEAR(got / static_cast<double>(expect), 1.0, 1e-10);
      EXPECT_NEAR(std::exp(log_density(dst, x)), static_cast<double>(direct_density(spec, shift, x)),
                  1e-12 * static_cast<double>(direct_density(spec, shift, x)) + 1e-300);
    }
  }
}

TEST(DensityRatio, NormalizedRatiosPeakAtOne) {
  const SynthSpec spec = small_spec(500, 15);
  const auto cal = gen_source(spec);
  const auto r = normalized_density_ratios(cal.features, source_mixture(spec),
                                           shifted_mixture(spec, ShiftSpec::diagonal(8, 4.0)));
  double peak = 0.0;
  for (double v : r) {
    EXPECT_GT(v, 0.0);
    peak = std::max(peak, v);
  }
  EXPECT_EQ(peak, 1.0);
}

}  // namespace
}  // namespace shiftcp
