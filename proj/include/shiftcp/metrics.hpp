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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "shiftcp/calibration.hpp"

namespace shiftcp {

/// Fraction of samples whose label is in its set.
double coverage(std::span<const LabelSet> sets, std::span<const int> labels);

/// Mean set cardinality.
double avg_set_size(std::span<const LabelSet> sets);

bool contains(const LabelSet& set, int label);

struct Severity {
  std::vector<double> per_sample;  // loss / in-distribution mean
  double mean = 0.0;
};

Severity shift_severity(std::span<const double> raw_losses, double id_mean);

/// One (trial, method, score, shift level) evaluation.
struct TrialRecord {
  std::size_t trial = 0;
  std::string method;
  std::string score;
  double shift = 0.0;  // shift level label, in class-sigma units
  double coverage = 0.0;
  double set_size = 0.0;
  double severity = 0.0;  // mean normalized test loss; 0 when no VAE was used
  double q = 0.0;
  double scale = 1.0;
};

struct ReportRow {
  std::string method;
  std::string score;
  double shift = 0.0;
  std::size_t trials = 0;
  double coverage = 0.0;
  double avg_set_size = 0.0;
  double severity = 0.0;

  /// "coverage / setsize" with 4 decimals.
  std::string cell() const;
};

struct ExperimentReport {
  double alpha = 0.1;
  std::vector<ReportRow> rows;
};

/// "%.4f / %.4f".
std::string format_cell(double coverage, double set_size);

/// Averages records per (method, score, shift) cell. Rows appear in order of
/// first occurrence; averaging runs in record order so output is bit-stable.
ExperimentReport build_report(std::span<const TrialRecord> records, double alpha);

}  // namespace shiftcp
