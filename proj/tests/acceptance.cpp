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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shiftcp/calibration.hpp"
#include "shiftcp/experiment.hpp"
#include "shiftcp/metrics.hpp"
#include "shiftcp/rng.hpp"
#include "shiftcp/scores.hpp"
#include "shiftcp/synthgen.hpp"
#include "shiftcp/vae.hpp"

namespace fs = std::filesystem;
using namespace shiftcp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// A trained source pipeline (probe + VAE) plus calibration scores.
struct Pipeline {
  BenchConfig config;
  std::size_t trial = 0;
  TrialData data;
  CalibrationSet cal;
};

struct TestSide {
  SynthDataset test;
  TestBatch batch;
};

BenchConfig pipeline_config() {
  BenchConfig c;
  c.methods = {Method::kSplit, Method::kRlscp, Method::kWqlcp};
  return c;
}

Pipeline build_pipeline(std::size_t trial) {
  Pipeline p;
  p.config = pipeline_config();
  p.trial = trial;
  p.data = prepare_trial(p.config, trial);
  const ScoreMatrix s = score_matrix(p.data.probe.predict(p.data.cal.features), ScoreKind::kThr, {});
  p.cal = make_calibration_set(s, p.data.cal.labels, p.data.cal_losses);
  return p;
}

// Test batch at `level` sigma; `draw` selects an independent sample.
TestSide test_side(const Pipeline& p, double level, std::uint64_t draw) {
  SynthSpec spec = p.config.data;
  spec.samples = p.config.n_test;
  const std::uint64_t seed =
      derive_seed(derive_seed(p.config.seed, SeedStream::kTrial, p.trial), SeedStream::kShift,
                  1000 + draw);
  TestSide t;
  t.test = apply_shift(spec, ShiftSpec::diagonal(spec.dim, level * spec.sigma), seed, "test");
  t.batch.scores = score_matrix(p.data.probe.predict(t.test.features), ScoreKind::kThr, {});
  t.batch.losses = batch_losses(t.test.features, *p.data.vae);
  t.batch.normalizer = p.data.normalizer;
  return t;
}

std::vector<Pipeline>& pool() {
  static std::vector<Pipeline> pipelines;
  return pipelines;
}

// The first `count` pipelines, trained on demand and shared across criteria.
std::span<const Pipeline> pipelines(std::size_t count) {
  auto& p = pool();
  while (p.size() < count) p.push_back(build_pipeline(p.size()));
  return std::span<const Pipeline>(p).first(count);
}

bool is_subset(const LabelSet& small, const LabelSet& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

// ------------------------------------------------------------------------

Outcome exchangeable_coverage() {
  const auto start = Clock::now();
  BenchConfig c;
  c.methods = {Method::kSplit};
  c.shifts = {0.0};
  c.trials = 100;
  c.n_cal = 1000;
  c.n_test = 1000;
  c.alpha = 0.1;
  const auto records = run_bench(c);
  double sum = 0.0;
  for (const auto& r : records) sum += r.coverage;
  const double mean = sum / static_cast<double>(records.size());
  const double elapsed = seconds_since(start);
  return {mean >= 0.885 && mean <= 0.915 && elapsed < 60.0,
          fmt("mean coverage %.4f over %zu trials (band [0.885, 0.915]), %.1f s (budget 60 s)",
              mean, records.size(), elapsed)};
}

// Exhaustive enumeration of the smallest score meeting the mass condition.
// Integer weights and alpha = num / den make the comparison exact.
double enumerate_quantile(const std::vector<double>& s, const std::vector<long long>& w,
                          long long num, long long den) {
  long long total = std::accumulate(w.begin(), w.end(), 0LL);
  double best = std::numeric_limits<double>::infinity();
  for (double candidate : s) {
    long long mass = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] <= candidate) mass += w[j];
    }
    if (mass * den >= (den - num) * total) best = std::min(best, candidate);
  }
  return best;
}

double enumerate_quantile(const std::vector<double>& s, const std::vector<double>& w, double a) {
  long double total = 0.0L;
  for (double v : w) total += v;
  double best = std::numeric_limits<double>::infinity();
  for (double candidate : s) {
    long double mass = 0.0L;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] <= candidate) mass += w[j];
    }
    if (mass >= (1.0L - a) * total) best = std::min(best, candidate);
  }
  return best;
}

Outcome weighted_quantile_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 20);
  std::uniform_int_distribution<int> grid(0, 9);
  std::uniform_int_distribution<long long> int_weight(1, 50);
  std::uniform_real_distribution<double> real_weight(1e-3, 10.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<long long> den_dist(2, 20);
  std::size_t mismatches = 0;
  for (int instance = 0; instance < 1000; ++instance) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<double> s(n);
    // Half the instances draw scores from a coarse grid to force ties.
    for (auto& v : s) v = instance % 2 ? unif(rng) : grid(rng) / 8.0;
    double got = 0.0, expect = 0.0;
    if (instance % 4 < 2) {
      std::vector<long long> w(n);
      for (auto& v : w) v = int_weight(rng);
      const long long den = den_dist(rng);
      const long long num = std::uniform_int_distribution<long long>(1, den - 1)(rng);
      std::vector<double> wd(w.begin(), w.end());
      got = weighted_quantile(s, wd, static_cast<double>(num) / static_cast<double>(den));
      expect = enumerate_quantile(s, w, num, den);
    } else {
      std::vector<double> w(n);
      for (auto& v : w) v = real_weight(rng);
      const double a = 0.001 + 0.998 * unif(rng);
      got = weighted_quantile(s, w, a);
      expect = enumerate_quantile(s, w, a);
    }
    mismatches += got != expect;
  }
  return {mismatches == 0, fmt("%zu of 1000 instances differ from enumeration", mismatches)};
}

Outcome weight_scale_invariance() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(1, 60);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t changed = 0;
  for (int instance = 0; instance < 200; ++instance) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<double> s(n), w(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = instance % 2 ? unif(rng) : std::round(unif(rng) * 10.0) / 10.0;
      w[j] = 0.01 + 5.0 * unif(rng);
    }
    const double a = 0.01 + 0.98 * unif(rng);
    const double base = weighted_quantile(s, w, a);
    for (double c : {1e-6, 1e-3, 1.0, 1e3, 1e6}) {
      std::vector<double> scaled(w);
      for (auto& v : scaled) v *= c;
      changed += weighted_quantile(s, scaled, a) != base;
    }
  }
  std::size_t differing_pipelines = 0;
  const auto pipes = pipelines(20);
  for (std::size_t k = 0; k < 20; ++k) {
    const TestSide t = test_side(pipes[k], 2.0 + static_cast<double>(k % 3), 0);
    const auto per = wqlcp_predict(t.batch, pipes[k].cal, 0.1, kDefaultEpsilon, WeightMode::kPerSample);
    const auto agg = wqlcp_predict(t.batch, pipes[k].cal, 0.1, kDefaultEpsilon, WeightMode::kAggregate);
    differing_pipelines += per.sets != agg.sets;
  }
  return {changed == 0 && differing_pipelines == 0,
          fmt("%zu of 1000 rescaled quantiles changed; %zu of 20 pipelines differ between "
              "per-sample and aggregate denominators",
              changed, differing_pipelines)};
}

Outcome rlscp_compatibility() {
  const auto pipes = pipelines(100);
  std::size_t unequal = 0, draws = 0;
  for (const auto& p : pipes) {
    // Fresh in-distribution test batches until one has RL_test <= 1.
    for (std::uint64_t draw = 0;; ++draw) {
      ++draws;
      const TestSide t = test_side(p, 0.0, draw);
      if (rl_threshold(t.batch.losses, 0.1, t.batch.normalizer) > 1.0) continue;
      const auto split = splitcp_predict(t.batch, p.cal, 0.1);
      const auto rl = rlscp_predict(t.batch, p.cal, 0.1);
      unequal += split.sets != rl.sets;
      break;
    }
  }
  return {unequal == 0,
          fmt("%zu of 100 pipelines with RL_test <= 1 differ from SplitCP (%zu batches drawn)",
              unequal, draws)};
}

Outcome rlscp_adaptivity() {
  const auto pipes = pipelines(100);
  std::size_t not_superset = 0, not_larger = 0, changed = 0, forced = 0;
  for (const auto& p : pipes) {
    TestSide t = test_side(p, 2.0, 0);
    if (rl_threshold(t.batch.losses, 0.1, t.batch.normalizer) <= 1.0) {
      t.batch.normalizer *= 0.5;  // force a scale above one
      ++forced;
    }
    const auto split = splitcp_predict(t.batch, p.cal, 0.1);
    const auto rl = rlscp_predict(t.batch, p.cal, 0.1);
    bool any_changed = false;
    for (std::size_t i = 0; i < split.sets.size(); ++i) {
      not_superset += !is_subset(split.sets[i], rl.sets[i]);
      any_changed |= split.sets[i] != rl.sets[i];
    }
    if (any_changed) {
      ++changed;
      not_larger += !(avg_set_size(rl.sets) > avg_set_size(split.sets));
    }
  }
  return {not_superset == 0 && not_larger == 0,
          fmt("%zu non-superset sets; %zu of %zu changed pipelines without larger mean size "
              "(%zu needed a forced normalizer)",
              not_superset, not_larger, changed, forced)};
}

Outcome shift_recovery() {
  const auto start = Clock::now();
  BenchConfig c = pipeline_config();
  c.shifts = {4.0};
  c.trials = 50;
  const auto report = build_report(run_bench(c), c.alpha);
  const double elapsed = seconds_since(start);
  const auto row = [&](const char* m) {
    return *std::find_if(report.rows.begin(), report.rows.end(),
                         [&](const ReportRow& r) { return r.method == m; });
  };
  const ReportRow split = row("split"), rl = row("rlscp"), wq = row("wqlcp");
  const bool a = split.coverage <= 1.0 - c.alpha - 0.03;
  const bool b = rl.coverage >= split.coverage + 0.02 && wq.coverage >= split.coverage + 0.02;
  const bool cc =
      wq.avg_set_size <= rl.avg_set_size && std::abs(wq.coverage - rl.coverage) <= 0.02;
  return {a && b && cc && elapsed < 300.0,
          fmt("split %s, rlscp %s, wqlcp %s (coverage / size); (a) %s (b) %s (c) %s; %.1f s "
              "(budget 300 s)",
              split.cell().c_str(), rl.cell().c_str(), wq.cell().c_str(), a ? "ok" : "no",
              b ? "ok" : "no", cc ? "ok" : "no", elapsed)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (std::uint64_t net = 0; net < 20; ++net) {
    VaeParams p = VaeParams::glorot({4, 3, 2}, net);
    for (auto view : p.tensors()) {
      for (Eigen::Index k = 0; k < view.size(); ++k) view[k] += 0.3 * g(rng);
    }
    Eigen::VectorXd x(4), noise(2);
    for (Eigen::Index k = 0; k < 4; ++k) x[k] = g(rng);
    for (Eigen::Index k = 0; k < 2; ++k) noise[k] = g(rng);
    worst = std::max(worst, grad_check(p, x, noise, 1.2, 1e-5));
  }
  return {worst < 1e-4, fmt("max relative error %.3g over 20 networks (limit 1e-4)", worst)};
}

Outcome loss_shift_sensitivity() {
  const auto pipes = pipelines(10);
  double min_ratio = std::numeric_limits<double>::infinity();
  std::vector<double> severity(3, 0.0);
  std::size_t monotone_seeds = 0;
  for (const auto& p : pipes) {
    const double id_mean = mean_loss(p.data.cal_losses);
    std::vector<double> per_seed;
    for (std::size_t level = 0; level < 3; ++level) {
      const TestSide t = test_side(p, 2.0 * static_cast<double>(level), 0);
      const double sev = shift_severity(t.batch.losses, id_mean).mean;
      per_seed.push_back(sev);
      severity[level] += sev / static_cast<double>(pipes.size());
      if (level == 2) min_ratio = std::min(min_ratio, mean_loss(t.batch.losses) / id_mean);
    }
    monotone_seeds += per_seed[0] < per_seed[1] && per_seed[1] < per_seed[2];
  }
  const bool increasing = severity[0] < severity[1] && severity[1] < severity[2];
  return {min_ratio >= 1.2 && increasing,
          fmt("min 4-sigma/in-distribution loss ratio %.3f over 10 seeds (need >= 1.2); mean "
              "severity %.4f < %.4f < %.4f (%zu of 10 seeds monotone)",
              min_ratio, severity[0], severity[1], severity[2], monotone_seeds)};
}

Outcome metric_exactness() {
  const std::vector<LabelSet> sets{{1, 2}, {3}, {0}};
  const bool cov = coverage(sets, std::vector<int>{2, 1, 0}) == 2.0 / 3.0;
  const bool size = avg_set_size(std::vector<LabelSet>{{0}, {0, 1}, {0, 1, 2}}) == 2.0;
  const Severity s = shift_severity(std::vector<double>{2.0, 4.0}, 2.0);
  const bool sev = s.per_sample == std::vector<double>{1.0, 2.0};
  return {cov && size && sev, fmt("coverage 2/3 %s, set size 2.0 %s, severity [1, 2] %s",
                                  cov ? "ok" : "no", size ? "ok" : "no", sev ? "ok" : "no")};
}

Outcome score_oracles() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> classes(2, 12);
  std::size_t exact_misses = 0;
  double worst_randomized = 0.0;
  for (int v = 0; v < 500; ++v) {
    const auto k = static_cast<std::size_t>(classes(rng));
    std::vector<double> p(k);
    double total = 0.0;
    for (auto& x : p) total += (x = v % 5 == 0 ? std::floor(unif(rng) * 4.0) + 1.0 : -std::log(unif(rng)));
    for (auto& x : p) x /= total;
    const double lambda = 0.01 + 0.2 * unif(rng);
    const auto k_reg = static_cast<std::size_t>(v % 4);
    const double u = unif(rng);
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p[a] > p[b] || (p[a] == p[b] && a < b);
    });
    double cumulative = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t y = order[r];
      cumulative += p[y];
      const double penalty = lambda * (r + 1 > k_reg ? static_cast<double>(r + 1 - k_reg) : 0.0);
      exact_misses += aps_score(p, y) != cumulative;
      exact_misses += raps_score(p, y, lambda, k_reg) != cumulative + penalty;
      worst_randomized =
          std::max({worst_randomized, std::abs(aps_score(p, y, true, u) - (cumulative - u * p[y])),
                    std::abs(raps_score(p, y, lambda, k_reg, true, u) -
                             (cumulative - u * p[y] + penalty))});
    }
  }
  return {exact_misses == 0 && worst_randomized <= 1e-12,
          fmt("%zu exact mismatches; max randomized deviation %.2g (tolerance 1e-12)",
              exact_misses, worst_randomized)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome bench_determinism() {
  const fs::path root = fs::temp_directory_path() / "shiftcp_acceptance_bench";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto run = [&](const char* out) {
    const std::string cmd = std::string("'") + SHIFTCP_CLI_PATH + "' bench --trials 20 --seed 5 --out '" +
                            (root / out).string() + "' > /dev/null 2>&1";
    const auto start = Clock::now();
    const int status = std::system(cmd.c_str());
    return std::make_pair(WIFEXITED(status) ? WEXITSTATUS(status) : -1, seconds_since(start));
  };
  const auto [code_a, time_a] = run("a");
  const auto [code_b, time_b] = run("b");
  std::size_t differing = 0;
  for (const char* f : {"report.csv", "report.json", "trials.csv", "plot.csv"}) {
    const std::string a = slurp(root / "a" / f);
    differing += a.empty() || a != slurp(root / "b" / f);
  }
  fs::remove_all(root);
  return {code_a == 0 && code_b == 0 && differing == 0,
          fmt("exit codes %d/%d; %zu of 4 report files differ; 4 methods x 3 shifts x 20 trials "
              "in %.1f s and %.1f s",
              code_a, code_b, differing, time_a, time_b)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"exchangeable coverage", exchangeable_coverage},
      {"weighted quantile equals enumeration", weighted_quantile_oracle},
      {"weight-scale invariance", weight_scale_invariance},
      {"RLSCP compatibility", rlscp_compatibility},
      {"RLSCP adaptivity", rlscp_adaptivity},
      {"shift recovery at 4 sigma", shift_recovery},
      {"VAE gradient check", gradient_check},
      {"reconstruction loss tracks shift", loss_shift_sensitivity},
      {"metric fixtures", metric_exactness},
      {"APS/RAPS oracles", score_oracles},
      {"bench determinism", bench_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
