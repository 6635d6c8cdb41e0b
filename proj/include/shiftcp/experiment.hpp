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

// Benchmark harness: {methods} x {scores} x {shift levels} x {trials} on
// synthetic Gaussian-mixture data.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "shiftcp/calibration.hpp"
#include "shiftcp/metrics.hpp"
#include "shiftcp/scores.hpp"
#include "shiftcp/synthgen.hpp"
#include "shiftcp/vae.hpp"

namespace shiftcp {

struct BenchConfig {
  SynthSpec data;  // samples and seed are overridden per split
  std::size_t n_train = 2000;
  std::size_t n_cal = 1000;
  std::size_t n_test = 1000;

  std::vector<Method> methods{Method::kSplit, Method::kRlscp, Method::kWqlcp,
                              Method::kWcpOracle};
  std::vector<ScoreKind> scores{ScoreKind::kThr};
  /// Mean shifts along the diagonal, in units of the class sigma.
  std::vector<double> shifts{0.0, 2.0, 4.0};
  std::size_t trials = 20;

  double alpha = 0.1;
  double epsilon = kDefaultEpsilon;
  WeightMode weight_mode = WeightMode::kPerSample;
  LossNormalizer normalizer = LossNormalizer::kQuantile;
  ScoreParams score_params;

  TrainConfig vae = desk_vae_defaults();
  double probe_learning_rate = 0.5;
  std::size_t probe_epochs = 300;

  std::uint64_t seed = 0;
  int threads = 0;  // 0: OpenMP default

  bool needs_vae() const;
  void validate() const;

  /// Synthetic-scale VAE settings: lr 1e-3 instead of the 1e-4 library default.
  static TrainConfig desk_vae_defaults();
};

/// One trial's splits, models and losses, exposed so tests can build
/// pipelines directly.
struct TrialData {
  SynthDataset train;
  SynthDataset cal;
  ProbeModel probe;
  std::optional<VaeParams> vae;
  std::vector<double> cal_losses;
  double normalizer = 1.0;  // in-distribution loss scale
};

TrialData prepare_trial(const BenchConfig& config, std::size_t trial);

SynthDataset trial_test_split(const BenchConfig& config, std::size_t trial,
                              std::size_t shift_index);

/// Evaluates every (shift, score, method) cell of one trial.
std::vector<TrialRecord> run_trial(const BenchConfig& config, std::size_t trial);

/// All trials, OpenMP-parallel across trials; records merged in trial order.
std::vector<TrialRecord> run_bench(const BenchConfig& config);

namespace serial {
std::vector<TrialRecord> run_bench(const BenchConfig& config);
}  // namespace serial

}  // namespace shiftcp
