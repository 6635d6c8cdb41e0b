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

// CSV/JSON file schemas (see docs/formats.md). CSV files are plain
// comma-separated text without quoting; ids must not contain commas.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shiftcp/calibration.hpp"
#include "shiftcp/metrics.hpp"
#include "shiftcp/scores.hpp"
#include "shiftcp/synthgen.hpp"
#include "shiftcp/vae.hpp"

namespace shiftcp::io {

/// Tolerance on probability row sums accepted by read_probabilities.
inline constexpr double kFileProbabilityTolerance = 1e-4;

/// Shortest-exact text form of a double ("%.17g").
std::string format_exact(double v);

struct LabeledProbabilities {
  std::vector<std::string> ids;
  std::vector<int> labels;
  ProbabilityMatrix probs;
};

/// `id,label,p0,...,p{K-1}`.
LabeledProbabilities read_probabilities(const std::filesystem::path& path);
void write_probabilities(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<int>& labels, const ProbabilityMatrix& probs);

/// `id,loss`.
std::vector<LossRecord> read_losses(const std::filesystem::path& path);
void write_losses(const std::filesystem::path& path, const std::vector<LossRecord>& records);

/// `id,ratio` (oracle density ratios for the WCP baseline).
std::vector<std::pair<std::string, double>> read_ratios(const std::filesystem::path& path);
void write_ratios(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const std::vector<double>& ratios);

/// Reorders `values` keyed by id to follow `ids`. Any id missing on either
/// side is an error.
std::vector<double> align_by_id(const std::vector<std::string>& ids,
                                const std::vector<std::pair<std::string, double>>& values,
                                const std::string& what);
std::vector<double> align_losses(const std::vector<std::string>& ids,
                                 const std::vector<LossRecord>& records);

/// `id,label,x0,...,x{d-1}`.
SynthDataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const SynthDataset& data);

struct SetRecords {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<LabelSet> sets;
};

/// `id,label,covered,set_size,members`, members as ascending labels joined by
/// ';'.
void write_prediction_sets(const std::filesystem::path& path, const std::vector<std::string>& ids,
                           const std::vector<int>& labels, const std::vector<LabelSet>& sets);
SetRecords read_prediction_sets(const std::filesystem::path& path);
std::string join_members(const LabelSet& set);

enum class ReportFormat { kCsv, kJson };

void write_report(const std::filesystem::path& path, const ExperimentReport& report,
                  ReportFormat format);
void write_trials(const std::filesystem::path& path, const std::vector<TrialRecord>& records);
/// Long-format table for plotting coverage and set size against severity.
void write_plot_data(const std::filesystem::path& path, const ExperimentReport& report);

void write_threshold(const std::filesystem::path& path, const PredictionSets& result,
                     ScoreKind score, WeightMode mode, double epsilon);

struct Manifest {
  int schema_version = 1;
  std::string dataset = "synthetic";
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::map<std::string, std::size_t> counts;  // split -> rows
  std::map<std::string, std::string> files;   // role -> relative path
  std::uint64_t seed = 0;
  std::string created_by = "shiftcp";
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Parses the manifest and checks that every referenced file exists relative
/// to the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace shiftcp::io
