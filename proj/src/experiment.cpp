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

#include "shiftcp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include <omp.h>

#include "shiftcp/error.hpp"
#include "shiftcp/rng.hpp"

namespace shiftcp {

TrainConfig BenchConfig::desk_vae_defaults() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  return c;
}

bool BenchConfig::needs_vae() const {
  return std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::kRlscp || m == Method::kWqlcp;
  });
}

void BenchConfig::validate() const {
  data.validate();
  require(n_train >= 1 && n_cal >= 1 && n_test >= 1, "bench split sizes must be >= 1");
  require(!methods.empty() && !scores.empty() && !shifts.empty(),
          "bench grid needs at least one method, score and shift level");
  require(trials >= 1, "bench needs at least one trial");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(epsilon > 0.0, "epsilon must be > 0");
  for (double s : shifts) require(s >= 0.0 && std::isfinite(s), "shift levels must be >= 0");
  vae.validate();
}

namespace {

SynthSpec split_spec(const BenchConfig& config, std::size_t samples, std::uint64_t seed) {
  SynthSpec spec = config.data;
  spec.samples = samples;
  spec.seed = seed;
  return spec;
}

std::uint64_t trial_seed(const BenchConfig& config, std::size_t trial) {
  return derive_seed(config.seed, SeedStream::kTrial, trial);
}

ShiftSpec shift_for(const BenchConfig& config, double level) {
  return ShiftSpec::diagonal(config.data.dim, level * config.data.sigma);
}

std::string cell_name(std::size_t trial, double shift, ScoreKind score, Method method) {
  return "trial " + std::to_string(trial) + ", shift " + std::to_string(shift) + ", score " +
         std::string(to_string(score)) + ", method " + std::string(to_string(method));
}

}  // namespace

TrialData prepare_trial(const BenchConfig& config, std::size_t trial) {
  const std::uint64_t seed = trial_seed(config, trial);
  TrialData t;
  t.train = gen_source(split_spec(config, config.n_train, derive_seed(seed, SeedStream::kData, 0)),
                       "train");
  t.cal = gen_source(split_spec(config, config.n_cal, derive_seed(seed, SeedStream::kData, 1)),
                     "cal");
  t.probe = train_probe(t.train, config.probe_learning_rate, config.probe_epochs,
                        derive_seed(seed, SeedStream::kProbe));
  if (config.needs_vae()) {
    TrainConfig vc = config.vae;
    vc.seed = derive_seed(seed, SeedStream::kVae);
    t.vae = train(t.train.features, vc).params;
    t.cal_losses = batch_losses(t.cal.features, *t.vae);
    t.normalizer = loss_normalizer(t.cal_losses, config.normalizer, config.alpha);
  }
  return t;
}

SynthDataset trial_test_split(const BenchConfig& config, std::size_t trial,
                              std::size_t shift_index) {
  const std::uint64_t seed = trial_seed(config, trial);
  const SynthSpec spec = split_spec(config, config.n_test, 0);
  return apply_shift(spec, shift_for(config, config.shifts.at(shift_index)),
                     derive_seed(seed, SeedStream::kShift, shift_index), "test");
}

std::vector<TrialRecord> run_trial(const BenchConfig& config, std::size_t trial) {
  const std::uint64_t seed = trial_seed(config, trial);
  const TrialData t = prepare_trial(config, trial);
  const ProbabilityMatrix cal_probs = t.probe.predict(t.cal.features);
  const bool want_ratios = std::find(config.methods.begin(), config.methods.end(),
                                     Method::kWcpOracle) != config.methods.end();
  const GaussianMixture source = source_mixture(config.data);

  std::vector<TrialRecord> records;
  for (std::size_t si = 0; si < config.shifts.size(); ++si) {
    const double level = config.shifts[si];
    const SynthDataset test = trial_test_split(config, trial, si);
    const ProbabilityMatrix test_probs = t.probe.predict(test.features);

    std::vector<double> test_losses;
    double severity = 0.0;
    if (t.vae) {
      test_losses = batch_losses(test.features, *t.vae);
      severity = shift_severity(test_losses, mean_loss(t.cal_losses)).mean;
    }
    MethodOptions options;
    options.epsilon = config.epsilon;
    options.weight_mode = config.weight_mode;
    if (want_ratios) {
      options.density_ratios = normalized_density_ratios(
          t.cal.features, source, shifted_mixture(config.data, shift_for(config, level)));
    }

    for (const ScoreKind score : config.scores) {
      const ScoreMatrix cal_scores = score_matrix(cal_probs, score, config.score_params,
                                                  derive_seed(seed, SeedStream::kScoreNoise, 0));
      const ScoreMatrix test_scores =
          score_matrix(test_probs, score, config.score_params,
                       derive_seed(seed, SeedStream::kScoreNoise, 1 + si));
      CalibrationSet cal = make_calibration_set(cal_scores, t.cal.labels);
      if (t.vae) cal.losses = t.cal_losses;
      TestBatch batch{test_scores, test_losses, t.normalizer};

      for (const Method method : config.methods) {
        try {
          const PredictionSets out = predict(method, batch, cal, config.alpha, options);
          TrialRecord r;
          r.trial = trial;
          r.method = std::string(to_string(method));
          r.score = std::string(to_string(score));
          r.shift = level;
          r.coverage = coverage(out.sets, test.labels);
          r.set_size = avg_set_size(out.sets);
          r.severity = severity;
          r.q = out.threshold.q;
          r.scale = out.threshold.scale;
          records.push_back(std::move(r));
        } catch (const NumericalError& e) {
          throw NumericalError(cell_name(trial, level, score, method) + ": " + e.what());
        } catch (const std::exception& e) {
          throw ValidationError(cell_name(trial, level, score, method) + ": " + e.what());
        }
      }
    }
  }
  return records;
}

namespace {

std::vector<TrialRecord> flatten(std::vector<std::vector<TrialRecord>>& per_trial) {
  std::vector<TrialRecord> out;
  for (auto& v : per_trial) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<TrialRecord> run_bench(const BenchConfig& config) {
  config.validate();
  std::vector<std::vector<TrialRecord>> per_trial(config.trials);
  std::vector<std::exception_ptr> errors(config.trials);
  const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(config.trials);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto trial = static_cast<std::size_t>(i);
    try {
      per_trial[trial] = run_trial(config, trial);
    } catch (...) {
      errors[trial] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return flatten(per_trial);
}

namespace serial {

std::vector<TrialRecord> run_bench(const BenchConfig& config) {
  config.validate();
  std::vector<std::vector<TrialRecord>> per_trial(config.trials);
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    per_trial[trial] = run_trial(config, trial);
  }
  return flatten(per_trial);
}

}  // namespace serial

}  // namespace shiftcp
