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

// shiftcp command-line driver.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shiftcp/calibration.hpp"
#include "shiftcp/error.hpp"
#include "shiftcp/experiment.hpp"
#include "shiftcp/io.hpp"
#include "shiftcp/metrics.hpp"
#include "shiftcp/rng.hpp"
#include "shiftcp/scores.hpp"
#include "shiftcp/synthgen.hpp"
#include "shiftcp/vae.hpp"

namespace fs = std::filesystem;
using namespace shiftcp;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

// Fills options that were not given on the command line from a JSON object
// whose keys are long option names without the leading dashes.
void apply_config_file(CLI::App& cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in) throw ValidationError("cannot open config file " + config_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(config_path + ": " + e.what());
  }
  if (!doc.is_object()) throw ValidationError(config_path + ": expected a JSON object");
  const auto as_text = [&](const nlohmann::json& v, const std::string& key) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ValidationError(config_path + ": unsupported value for '" + key + "'");
  };
  for (const auto& [key, value] : doc.items()) {
    CLI::Option* opt = nullptr;
    try {
      opt = cmd.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ValidationError(config_path + ": unknown option '" + key + "' for '" +
                            cmd.get_name() + "'");
    }
    if (opt->count() > 0 || key == "config") continue;  // flags override the file
    if (value.is_array()) {
      for (const auto& item : value) opt->add_result(as_text(item, key));
    } else {
      opt->add_result(as_text(value, key));
    }
    opt->run_callback();
  }
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : ",") + p;
  return s;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  fs::path out;
  std::uint64_t seed = 0;
  SynthSpec spec;
  std::size_t n_train = 2000, n_cal = 1000, n_test = 1000;
  double shift = 0.0, cov_mult = 1.0, angle = 0.0, ood = 0.0;
  double probe_lr = 0.5;
  std::size_t probe_epochs = 300;
};

void run_synth(const SynthArgs& a) {
  SynthSpec spec = a.spec;
  const auto split = [&](std::size_t n, std::uint64_t seed) {
    SynthSpec s = spec;
    s.samples = n;
    s.seed = seed;
    return s;
  };
  ShiftSpec shift = ShiftSpec::diagonal(spec.dim, a.shift * spec.sigma);
  shift.cov_multiplier = a.cov_mult;
  shift.angle = a.angle;
  shift.ood_fraction = a.ood;

  const SynthDataset train =
      gen_source(split(a.n_train, derive_seed(a.seed, SeedStream::kData, 0)), "train");
  const SynthDataset cal =
      gen_source(split(a.n_cal, derive_seed(a.seed, SeedStream::kData, 1)), "cal");
  const SynthDataset test = apply_shift(split(a.n_test, 0), shift,
                                        derive_seed(a.seed, SeedStream::kShift, 0), "test");
  const ProbeModel probe =
      train_probe(train, a.probe_lr, a.probe_epochs, derive_seed(a.seed, SeedStream::kProbe));

  fs::create_directories(a.out);
  io::Manifest m;
  m.num_classes = spec.num_classes;
  m.dim = spec.dim;
  m.seed = a.seed;
  const auto emit = [&](const std::string& role, const std::string& file, std::size_t rows) {
    m.files[role] = file;
    m.counts[role] = rows;
  };
  io::write_dataset(a.out / "train.csv", train);
  io::write_dataset(a.out / "cal.csv", cal);
  io::write_dataset(a.out / "test.csv", test);
  io::write_probabilities(a.out / "cal_probs.csv", cal.ids, cal.labels,
                          probe.predict(cal.features));
  io::write_probabilities(a.out / "test_probs.csv", test.ids, test.labels,
                          probe.predict(test.features));
  emit("train", "train.csv", train.size());
  emit("cal", "cal.csv", cal.size());
  emit("test", "test.csv", test.size());
  emit("cal_probs", "cal_probs.csv", cal.size());
  emit("test_probs", "test_probs.csv", test.size());
  if (a.ood == 0.0) {
    io::write_ratios(a.out / "cal_ratios.csv", cal.ids,
                     normalized_density_ratios(cal.features, source_mixture(spec),
                                               shifted_mixture(spec, shift)));
    emit("cal_ratios", "cal_ratios.csv", cal.size());
  }
  io::write_manifest(a.out / "manifest.json", m);
  std::printf("wrote %zu/%zu/%zu train/cal/test rows to %s (probe accuracy: source %.4f, "
              "test %.4f)\n",
              train.size(), cal.size(), test.size(), a.out.string().c_str(),
              probe.accuracy(cal), probe.accuracy(test));
}

// ------------------------------------------------------------------ vae

struct VaeTrainArgs {
  fs::path data, out, trace;
  TrainConfig config;
};

void run_vae_train(const VaeTrainArgs& a) {
  const SynthDataset data = io::read_dataset(a.data);
  const TrainResult result = train(data.features, a.config);
  save_checkpoint(a.out, result.params);
  if (!a.trace.empty()) {
    std::ofstream trace(a.trace);
    if (!trace) throw ValidationError("cannot write " + a.trace.string());
    trace << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      trace << e + 1 << ',' << io::format_exact(result.epoch_loss[e]) << '\n';
    }
  }
  std::printf("trained %zu epochs; loss %.6f -> %.6f; checkpoint %s\n", result.epoch_loss.size(),
              result.epoch_loss.front(), result.epoch_loss.back(), a.out.string().c_str());
}

struct VaeLossArgs {
  fs::path checkpoint, data, out;
};

void run_vae_losses(const VaeLossArgs& a) {
  const VaeParams params = load_checkpoint(a.checkpoint);
  const SynthDataset data = io::read_dataset(a.data);
  const auto raw = batch_losses(data.features, params);
  io::write_losses(a.out, make_loss_records(data.ids, raw, mean_loss(raw)));
  std::printf("wrote %zu losses (mean %.6f) to %s\n", raw.size(), mean_loss(raw),
              a.out.string().c_str());
}

// ------------------------------------------------------------------- cp

struct CpArgs {
  fs::path cal_probs, test_probs, cal_losses, test_losses, ratios, out_sets, out_threshold;
  std::string method = "split";
  std::string score = "thr";
  std::string weight_mode = "per-sample";
  std::string normalizer = "quantile";
  double alpha = 0.1;
  double epsilon = kDefaultEpsilon;
  ScoreParams score_params;
  std::uint64_t seed = 0;
};

void run_calibrate_predict(const CpArgs& a) {
  const Method method = parse_method(a.method);
  const ScoreKind kind = parse_score_kind(a.score);
  const WeightMode mode = parse_weight_mode(a.weight_mode);
  const LossNormalizer norm = parse_loss_normalizer(a.normalizer);
  const bool needs_losses = method == Method::kRlscp || method == Method::kWqlcp;
  if (needs_losses && (a.cal_losses.empty() || a.test_losses.empty())) {
    throw ValidationError("method " + a.method +
                          " needs --cal-losses and --test-losses; produce them with "
                          "`shiftcp vae losses`");
  }
  if (method == Method::kWcpOracle && a.ratios.empty()) {
    throw ValidationError("method wcp-oracle needs --ratios (written by `shiftcp synth`)");
  }

  const auto cal_in = io::read_probabilities(a.cal_probs);
  const auto test_in = io::read_probabilities(a.test_probs);
  if (cal_in.probs.cols() != test_in.probs.cols()) {
    throw ValidationError("calibration and test files have different class counts");
  }
  const ScoreMatrix cal_scores =
      score_matrix(cal_in.probs, kind, a.score_params, derive_seed(a.seed, SeedStream::kScoreNoise, 0));
  const ScoreMatrix test_scores =
      score_matrix(test_in.probs, kind, a.score_params, derive_seed(a.seed, SeedStream::kScoreNoise, 1));

  CalibrationSet cal = make_calibration_set(cal_scores, cal_in.labels);
  TestBatch test{test_scores, {}, 1.0};
  if (needs_losses) {
    cal.losses = io::align_losses(cal_in.ids, io::read_losses(a.cal_losses));
    test.losses = io::align_losses(test_in.ids, io::read_losses(a.test_losses));
    test.normalizer = loss_normalizer(*cal.losses, norm, a.alpha);
  }
  MethodOptions options;
  options.epsilon = a.epsilon;
  options.weight_mode = mode;
  if (method == Method::kWcpOracle) {
    options.density_ratios = io::align_by_id(cal_in.ids, io::read_ratios(a.ratios), "ratio file");
  }
  const PredictionSets result = predict(method, test, cal, a.alpha, options);
  io::write_prediction_sets(a.out_sets, test_in.ids, test_in.labels, result.sets);
  if (!a.out_threshold.empty()) {
    io::write_threshold(a.out_threshold, result, kind, mode, a.epsilon);
  }
  std::printf("%s/%s: q=%.6g scale=%.6g coverage=%.4f avg set size=%.4f\n", a.method.c_str(),
              a.score.c_str(), result.threshold.q, result.threshold.scale,
              coverage(result.sets, test_in.labels), avg_set_size(result.sets));
}

// ------------------------------------------------------------- evaluate

struct EvalArgs {
  fs::path sets, labels, test_losses, cal_losses, out_csv, out_json;
  std::string method = "unknown";
  std::string score = "unknown";
  double alpha = 0.1;
  double shift = 0.0;
};

void run_evaluate(const EvalArgs& a) {
  const io::SetRecords records = io::read_prediction_sets(a.sets);
  require(!records.sets.empty(), a.sets.string() + ": no prediction sets");
  std::vector<int> labels = records.labels;
  if (!a.labels.empty()) {
    const SynthDataset truth = io::read_dataset(a.labels);
    std::vector<std::pair<std::string, double>> keyed;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      keyed.emplace_back(truth.ids[i], static_cast<double>(truth.labels[i]));
    }
    const auto aligned = io::align_by_id(records.ids, keyed, "label file");
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(aligned[i]);
  }
  TrialRecord r;
  r.method = a.method;
  r.score = a.score;
  r.shift = a.shift;
  r.coverage = coverage(records.sets, labels);
  r.set_size = avg_set_size(records.sets);
  if (!a.test_losses.empty()) {
    require(!a.cal_losses.empty(), "--test-losses needs --cal-losses for the in-distribution mean");
    const auto test = io::align_losses(records.ids, io::read_losses(a.test_losses));
    std::vector<double> cal;
    for (const auto& rec : io::read_losses(a.cal_losses)) cal.push_back(rec.raw);
    r.severity = shift_severity(test, mean_loss(cal)).mean;
  }
  const std::vector<TrialRecord> rows{r};
  const ExperimentReport report = build_report(rows, a.alpha);
  if (!a.out_csv.empty()) io::write_report(a.out_csv, report, io::ReportFormat::kCsv);
  if (!a.out_json.empty()) io::write_report(a.out_json, report, io::ReportFormat::kJson);
  std::printf("%s\n", report.rows.front().cell().c_str());
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  fs::path out;
  BenchConfig config;
  std::vector<std::string> methods{"split", "rlscp", "wqlcp", "wcp-oracle"};
  std::vector<std::string> scores{"thr"};
  std::string weight_mode = "per-sample";
  std::string normalizer = "quantile";
};

void run_bench_cmd(BenchArgs& a) {
  BenchConfig& c = a.config;
  c.methods.clear();
  for (const auto& m : a.methods) c.methods.push_back(parse_method(m));
  c.scores.clear();
  for (const auto& s : a.scores) c.scores.push_back(parse_score_kind(s));
  c.weight_mode = parse_weight_mode(a.weight_mode);
  c.normalizer = parse_loss_normalizer(a.normalizer);

  const auto records = run_bench(c);
  const ExperimentReport report = build_report(records, c.alpha);
  fs::create_directories(a.out);
  io::write_report(a.out / "report.csv", report, io::ReportFormat::kCsv);
  io::write_report(a.out / "report.json", report, io::ReportFormat::kJson);
  io::write_trials(a.out / "trials.csv", records);
  io::write_plot_data(a.out / "plot.csv", report);
  std::printf("%-11s %-5s %6s %9s  %s\n", "method", "score", "shift", "severity",
              "coverage / set size");
  for (const auto& row : report.rows) {
    std::printf("%-11s %-5s %6.2f %9.4f  %s\n", row.method.c_str(), row.score.c_str(), row.shift,
                row.severity, row.cell().c_str());
  }
  std::printf("%zu trials [%s] x [%s]; reports in %s\n", c.trials, join(a.methods).c_str(),
              join(a.scores).c_str(), a.out.string().c_str());
}

void add_score_options(CLI::App* cmd, ScoreParams& p) {
  cmd->add_option("--lambda", p.lambda, "RAPS penalty weight")->capture_default_str();
  cmd->add_option("--k-reg", p.k_reg, "RAPS unpenalized ranks")->capture_default_str();
  cmd->add_flag("--randomized", p.randomized, "randomize APS/RAPS ties");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction under distribution shift (split, RLSCP, WQLCP, WCP)"};
  app.require_subcommand(1);
  std::string config_path;

  // synth
  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic splits and probe outputs");
  synth_cmd->add_option("--config", config_path, "JSON file with option defaults");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--classes", synth.spec.num_classes)->capture_default_str();
  synth_cmd->add_option("--dim", synth.spec.dim)->capture_default_str();
  synth_cmd->add_option("--radius", synth.spec.radius)->capture_default_str();
  synth_cmd->add_option("--sigma", synth.spec.sigma)->capture_default_str();
  synth_cmd->add_option("--n-train", synth.n_train)->capture_default_str();
  synth_cmd->add_option("--n-cal", synth.n_cal)->capture_default_str();
  synth_cmd->add_option("--n-test", synth.n_test)->capture_default_str();
  synth_cmd->add_option("--shift", synth.shift, "diagonal mean shift in sigma units")
      ->capture_default_str();
  synth_cmd->add_option("--cov-mult", synth.cov_mult)->capture_default_str();
  synth_cmd->add_option("--angle", synth.angle, "rotation in radians")->capture_default_str();
  synth_cmd->add_option("--ood", synth.ood, "outlier fraction")->capture_default_str();
  synth_cmd->add_option("--probe-lr", synth.probe_lr)->capture_default_str();
  synth_cmd->add_option("--probe-epochs", synth.probe_epochs)->capture_default_str();

  // vae
  auto* vae_cmd = app.add_subcommand("vae", "train the VAE or compute reconstruction losses");
  vae_cmd->require_subcommand(1);
  VaeTrainArgs vt;
  auto* vt_cmd = vae_cmd->add_subcommand("train", "train a beta-VAE on a dataset CSV");
  vt_cmd->add_option("--config", config_path, "JSON file with option defaults");
  vt_cmd->add_option("--data", vt.data)->required();
  vt_cmd->add_option("--out", vt.out, "checkpoint path")->required();
  vt_cmd->add_option("--trace", vt.trace, "optional per-epoch loss CSV");
  vt_cmd->add_option("--epochs", vt.config.epochs)->capture_default_str();
  vt_cmd->add_option("--lr", vt.config.learning_rate)->capture_default_str();
  vt_cmd->add_option("--batch-size", vt.config.batch_size)->capture_default_str();
  vt_cmd->add_option("--beta", vt.config.beta)->capture_default_str();
  vt_cmd->add_option("--latent", vt.config.latent_dim)->capture_default_str();
  vt_cmd->add_option("--hidden", vt.config.hidden_dim)->capture_default_str();
  vt_cmd->add_option("--weight-decay", vt.config.weight_decay)->capture_default_str();
  vt_cmd->add_option("--seed", vt.config.seed)->capture_default_str();

  VaeLossArgs vl;
  auto* vl_cmd = vae_cmd->add_subcommand("losses", "per-sample reconstruction losses");
  vl_cmd->add_option("--config", config_path, "JSON file with option defaults");
  vl_cmd->add_option("--checkpoint", vl.checkpoint)->required();
  vl_cmd->add_option("--data", vl.data)->required();
  vl_cmd->add_option("--out", vl.out)->required();

  // cp
  auto* cp_cmd = app.add_subcommand("cp", "conformal calibration");
  cp_cmd->require_subcommand(1);
  CpArgs cp;
  auto* cpp_cmd = cp_cmd->add_subcommand("calibrate-predict", "calibrate and emit prediction sets");
  cpp_cmd->add_option("--config", config_path, "JSON file with option defaults");
  cpp_cmd->add_option("--cal-probs", cp.cal_probs)->required();
  cpp_cmd->add_option("--test-probs", cp.test_probs)->required();
  cpp_cmd->add_option("--cal-losses", cp.cal_losses);
  cpp_cmd->add_option("--test-losses", cp.test_losses);
  cpp_cmd->add_option("--ratios", cp.ratios, "calibration density ratios (wcp-oracle)");
  cpp_cmd->add_option("--out-sets", cp.out_sets)->required();
  cpp_cmd->add_option("--out-threshold", cp.out_threshold);
  cpp_cmd->add_option("--method", cp.method, "split, rlscp, wqlcp or wcp-oracle")
      ->capture_default_str();
  cpp_cmd->add_option("--score", cp.score, "thr, aps or raps")->capture_default_str();
  cpp_cmd->add_option("--alpha", cp.alpha)->capture_default_str();
  cpp_cmd->add_option("--epsilon", cp.epsilon)->capture_default_str();
  cpp_cmd->add_option("--weight-mode", cp.weight_mode)->capture_default_str();
  cpp_cmd->add_option("--normalizer", cp.normalizer, "mean or quantile")->capture_default_str();
  cpp_cmd->add_option("--seed", cp.seed)->capture_default_str();
  add_score_options(cpp_cmd, cp.score_params);

  // evaluate
  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "coverage, set size and shift severity");
  ev_cmd->add_option("--config", config_path, "JSON file with option defaults");
  ev_cmd->add_option("--sets", ev.sets)->required();
  ev_cmd->add_option("--labels", ev.labels, "dataset CSV whose labels override the sets file");
  ev_cmd->add_option("--test-losses", ev.test_losses);
  ev_cmd->add_option("--cal-losses", ev.cal_losses);
  ev_cmd->add_option("--out-csv", ev.out_csv);
  ev_cmd->add_option("--out-json", ev.out_json);
  ev_cmd->add_option("--method", ev.method)->capture_default_str();
  ev_cmd->add_option("--score", ev.score)->capture_default_str();
  ev_cmd->add_option("--alpha", ev.alpha)->capture_default_str();
  ev_cmd->add_option("--shift", ev.shift)->capture_default_str();

  // bench
  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "methods x scores x shifts x trials grid");
  BenchConfig& bc = bench.config;
  bench_cmd->add_option("--config", config_path, "JSON file with option defaults");
  bench_cmd->add_option("--out", bench.out, "output directory")->required();
  bench_cmd->add_option("--methods,--method", bench.methods)->capture_default_str();
  bench_cmd->add_option("--scores,--score", bench.scores)->capture_default_str();
  bench_cmd->add_option("--shifts", bc.shifts, "mean shifts in sigma units")->capture_default_str();
  bench_cmd->add_option("--trials", bc.trials)->capture_default_str();
  bench_cmd->add_option("--alpha", bc.alpha)->capture_default_str();
  bench_cmd->add_option("--epsilon", bc.epsilon)->capture_default_str();
  bench_cmd->add_option("--weight-mode", bench.weight_mode)->capture_default_str();
  bench_cmd->add_option("--normalizer", bench.normalizer)->capture_default_str();
  bench_cmd->add_option("--seed", bc.seed)->capture_default_str();
  bench_cmd->add_option("--threads", bc.threads, "0 = OpenMP default")->capture_default_str();
  bench_cmd->add_option("--classes", bc.data.num_classes)->capture_default_str();
  bench_cmd->add_option("--dim", bc.data.dim)->capture_default_str();
  bench_cmd->add_option("--radius", bc.data.radius)->capture_default_str();
  bench_cmd->add_option("--sigma", bc.data.sigma)->capture_default_str();
  bench_cmd->add_option("--n-train", bc.n_train)->capture_default_str();
  bench_cmd->add_option("--n-cal", bc.n_cal)->capture_default_str();
  bench_cmd->add_option("--n-test", bc.n_test)->capture_default_str();
  bench_cmd->add_option("--beta", bc.vae.beta)->capture_default_str();
  bench_cmd->add_option("--vae-epochs", bc.vae.epochs)->capture_default_str();
  bench_cmd->add_option("--vae-lr", bc.vae.learning_rate)->capture_default_str();
  bench_cmd->add_option("--vae-batch-size", bc.vae.batch_size)->capture_default_str();
  bench_cmd->add_option("--latent", bc.vae.latent_dim)->capture_default_str();
  bench_cmd->add_option("--hidden", bc.vae.hidden_dim)->capture_default_str();
  bench_cmd->add_option("--probe-lr", bc.probe_learning_rate)->capture_default_str();
  bench_cmd->add_option("--probe-epochs", bc.probe_epochs)->capture_default_str();
  add_score_options(bench_cmd, bc.score_params);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    CLI::App* active = nullptr;
    for (CLI::App* cmd : {synth_cmd, vt_cmd, vl_cmd, cpp_cmd, ev_cmd, bench_cmd}) {
      if (cmd->parsed()) active = cmd;
    }
    if (active == nullptr) throw ValidationError("no command given");
    apply_config_file(*active, config_path);

    if (active == synth_cmd) run_synth(synth);
    else if (active == vt_cmd) run_vae_train(vt);
    else if (active == vl_cmd) run_vae_losses(vl);
    else if (active == cpp_cmd) run_calibrate_predict(cp);
    else if (active == ev_cmd) run_evaluate(ev);
    else run_bench_cmd(bench);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
