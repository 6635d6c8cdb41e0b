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

// OpenMP kernels must reproduce their serial references bit for bit,
// whatever the thread count.

#include <random>
#include <vector>

#include <gtest/gtest.h>
#include <omp.h>

#include "shiftcp/calibration.hpp"
#include "shiftcp/experiment.hpp"
#include "shiftcp/vae.hpp"
#include "test_util.hpp"

namespace shiftcp {
namespace {

class ThreadCounts : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

TEST_P(ThreadCounts, ScoreMatrix) {
  std::mt19937_64 rng(71);
  const auto probs = testing::random_probabilities(rng, 997, 10);
  for (const ScoreKind kind : {ScoreKind::kThr, ScoreKind::kAps, ScoreKind::kRaps}) {
    for (const bool randomized : {false, true}) {
      const ScoreParams params{0.01, 5, randomized};
      EXPECT_EQ(score_matrix(probs, kind, params, 5).values(),
                serial::score_matrix(probs, kind, params, 5).values());
    }
  }
}

TEST_P(ThreadCounts, AssembleSets) {
  std::mt19937_64 rng(72);
  const auto probs = testing::random_probabilities(rng, 1001, 10);
  const ScoreMatrix s = score_matrix(probs, ScoreKind::kAps, {});
  std::vector<double> per(1001);
  std::uniform_real_distribution<double> unif(0.3, 1.0);
  for (auto& q : per) q = unif(rng);
  EXPECT_EQ(assemble_sets(s, per, 1.3), serial::assemble_sets(s, per, 1.3));
  EXPECT_EQ(assemble_sets(s, std::vector<double>{0.8}), serial::assemble_sets(s, std::vector<double>{0.8}));
}

TEST_P(ThreadCounts, WqlcpThresholds) {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> scores(500), cal_losses(500), test_losses(300);
  for (auto& v : scores) v = unif(rng);
  for (auto& v : cal_losses) v = 5.0 * unif(rng);
  for (auto& v : test_losses) v = 5.0 * unif(rng);
  EXPECT_EQ(wqlcp_thresholds(scores, cal_losses, test_losses, 0.1, 1e-8),
            serial::wqlcp_thresholds(scores, cal_losses, test_losses, 0.1, 1e-8));
}

TEST_P(ThreadCounts, BatchLosses) {
  std::mt19937_64 rng(74);
  std::normal_distribution<double> g(0.0, 2.0);
  Eigen::MatrixXd data(777, 8);
  for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = g(rng);
  const VaeParams p = VaeParams::glorot({8, 32, 4}, 4);
  EXPECT_EQ(batch_losses(data, p), serial::batch_losses(data, p));
}

TEST_P(ThreadCounts, BenchGrid) {
  BenchConfig c;
  c.n_train = 300;
  c.n_cal = 200;
  c.n_test = 200;
  c.trials = 3;
  c.vae.epochs = 5;
  c.scores = {ScoreKind::kThr, ScoreKind::kRaps};
  c.score_params.randomized = true;
  c.threads = GetParam();
  const auto parallel = run_bench(c);
  const auto serial_records = serial::run_bench(c);
  ASSERT_EQ(parallel.size(), serial_records.size());
  ASSERT_EQ(parallel.size(), 3u * 3u * 2u * 4u);
  for (std::size_t i = 0; i < parallel.size(); ++i) {
    EXPECT_EQ(parallel[i].trial, serial_records[i].trial);
    EXPECT_EQ(parallel[i].method, serial_records[i].method);
    EXPECT_EQ(parallel[i].coverage, serial_records[i].coverage);
    EXPECT_EQ(parallel[i].set_size, serial_records[i].set_size);
    EXPECT_EQ(parallel[i].severity, serial_records[i].severity);
    EXPECT_EQ(parallel[i].q, serial_records[i].q);
    EXPECT_EQ(parallel[i].scale, serial_records[i].scale);
  }
}

INSTANTIATE_TEST_SUITE_P(Omp, ThreadCounts, ::testing::Values(1, 2, 4));

}  // namespace
}  // namespace shiftcp
