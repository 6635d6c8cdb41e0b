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

#include "shiftcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "shiftcp/error.hpp"

namespace shiftcp {

bool contains(const LabelSet& set, int label) {
  return std::binary_search(set.begin(), set.end(), label);
}

double coverage(std::span<const LabelSet> sets, std::span<const int> labels) {
  require(sets.size() == labels.size(), "coverage: " + std::to_string(sets.size()) +
                                            " sets but " + std::to_string(labels.size()) +
                                            " labels");
  require(!sets.empty(), "coverage of an empty batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (contains(sets[i], labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sets.size());
}

double avg_set_size(std::span<const LabelSet> sets) {
  require(!sets.empty(), "average set size of an empty batch");
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  return static_cast<double>(total) / static_cast<double>(sets.size());
}

Severity shift_severity(std::span<const double> raw_losses, double id_mean) {
  require(id_mean > 0.0 && std::isfinite(id_mean),
          "in-distribution mean loss must be > 0");
  Severity out;
  out.per_sample.reserve(raw_losses.size());
  double total = 0.0;
  for (double l : raw_losses) {
    out.per_sample.push_back(l / id_mean);
    total += out.per_sample.back();
  }
  out.mean = raw_losses.empty() ? 0.0 : total / static_cast<double>(raw_losses.size());
  return out;
}

std::string format_cell(double coverage, double set_size) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f / %.4f", coverage, set_size);
  return buf;
}

std::string ReportRow::cell() const { return format_cell(coverage, avg_set_size); }

ExperimentReport build_report(std::span<const TrialRecord> records, double alpha) {
  require(!records.empty(), "cannot build a report from zero trial results");
  ExperimentReport report;
  report.alpha = alpha;
  for (const auto& r : records) {
    auto it = std::find_if(report.rows.begin(), report.rows.end(), [&](const ReportRow& row) {
      return row.method == r.method && row.score == r.score && row.shift == r.shift;
    });
    if (it == report.rows.end()) {
      report.rows.push_back({r.method, r.score, r.shift, 0, 0.0, 0.0, 0.0});
      it = std::prev(report.rows.end());
    }
    ++it->trials;
    it->coverage += r.coverage;
    it->avg_set_size += r.set_size;
    it->severity += r.severity;
  }
  for (auto& row : report.rows) {
    const auto n = static_cast<double>(row.trials);
    row.coverage /= n;
    row.avg_set_size /= n;
    row.severity /= n;
  }
  return report;
}

}  // namespace shiftcp
