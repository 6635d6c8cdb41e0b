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

#include "shiftcp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "shiftcp/error.hpp"

namespace shiftcp::io {

namespace {

using Row = std::vector<std::string>;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;
};

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (table.header.empty()) {
      table.header = split(line, ',');
      continue;
    }
    Row row = split(line, ',');
    if (row.size() != table.header.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " +
                            std::to_string(row.size()));
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw ValidationError(path.string() + ": file is empty");
  return table;
}

std::string where(const std::filesystem::path& path, const Table& t, std::size_t r) {
  return path.string() + ":" + std::to_string(t.line_numbers[r]);
}

double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ValidationError(context + ": '" + text + "' is not a finite number");
  }
  return value;
}

int parse_int(const std::string& text, const std::string& context) {
  int value = 0;
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), last, value);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(context + ": '" + text + "' is not an integer");
  }
  return value;
}

void expect_header(const std::filesystem::path& path, const Row& header,
                   const std::vector<std::string>& prefix) {
  bool ok = header.size() >= prefix.size();
  for (std::size_t i = 0; ok && i < prefix.size(); ++i) ok = header[i] == prefix[i];
  if (!ok) {
    std::string expected;
    for (const auto& p : prefix) expected += (expected.empty() ? "" : ",") + p;
    throw ValidationError(path.string() + ": header must start with '" + expected + "'");
  }
}

void expect_indexed_columns(const std::filesystem::path& path, const Row& header,
                            std::size_t offset, const std::string& stem) {
  for (std::size_t c = offset; c < header.size(); ++c) {
    const std::string want = stem + std::to_string(c - offset);
    if (header[c] != want) {
      throw ValidationError(path.string() + ": column " + std::to_string(c + 1) + " is '" +
                            header[c] + "', expected '" + want + "'");
    }
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw ValidationError("failed writing " + path.string());
}

void check_unique(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (id.empty()) throw ValidationError(path.string() + ": empty id");
    if (!seen.insert(id).second) {
      throw ValidationError(path.string() + ": duplicate id '" + id + "'");
    }
  }
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double rounded4(double v) { return std::stod(fixed4(v)); }

}  // namespace

std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LabeledProbabilities read_probabilities(const std::filesystem::path& path) {
  const Table t = read_table(path);
  expect_header(path, t.header, {"id", "label"});
  require(t.header.size() >= 4, path.string() + ": need at least two probability columns");
  expect_indexed_columns(path, t.header, 2, "p");
  const std::size_t k = t.header.size() - 2;
  require(!t.rows.empty(), path.string() + ": no data rows");

  LabeledProbabilities out;
  std::vector<double> values;
  values.reserve(t.rows.size() * k);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = where(path, t, r);
    out.ids.push_back(row[0]);
    const int label = parse_int(row[1], ctx);
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ValidationError(ctx + ": label " + std::to_string(label) + " out of range");
    }
    out.labels.push_back(label);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double p = parse_double(row[c + 2], ctx);
      if (p < 0.0 || p > 1.0) throw ValidationError(ctx + ": probability outside [0, 1]");
      values.push_back(p);
      sum += p;
    }
    if (std::abs(sum - 1.0) > kFileProbabilityTolerance) {
      throw ValidationError(ctx + ": probabilities in row " + std::to_string(r + 1) +
                            " sum to " + format_exact(sum) + " (must be 1 +- 1e-4)");
    }
  }
  check_unique(out.ids, path);
  out.probs = ProbabilityMatrix(t.rows.size(), k, std::move(values), kFileProbabilityTolerance);
  return out;
}

void write_probabilities(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<int>& labels, const ProbabilityMatrix& probs) {
  require(ids.size() == probs.rows() && labels.size() == probs.rows(),
          "write_probabilities: ids, labels and rows differ in length");
  auto out = open_out(path);
  out << "id,label";
  for (std::size_t k = 0; k < probs.cols(); ++k) out << ",p" << k;
  out << '\n';
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    out << ids[i] << ',' << labels[i];
    for (double p : probs.row(i)) out << ',' << format_exact(p);
    out << '\n';
  }
  finish(out, path);
}

std::vector<LossRecord> read_losses(const std::filesystem::path& path) {
  const Table t = read_table(path);
  expect_header(path, t.header, {"id", "loss"});
  require(t.header.size() == 2, path.string() + ": loss files have exactly columns id,loss");
  std::vector<LossRecord> out;
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = where(path, t, r);
    const double loss = parse_double(t.rows[r][1], ctx);
    if (loss < 0.0) throw ValidationError(ctx + ": negative loss " + t.rows[r][1]);
    out.push_back({t.rows[r][0], loss, loss});
    ids.push_back(t.rows[r][0]);
  }
  check_unique(ids, path);
  return out;
}

void write_losses(const std::filesystem::path& path, const std::vector<LossRecord>& records) {
  auto out = open_out(path);
  out << "id,loss\n";
  for (const auto& r : records) out << r.id << ',' << format_exact(r.raw) << '\n';
  finish(out, path);
}

std::vector<std::pair<std::string, double>> read_ratios(const std::filesystem::path& path) {
  const Table t = read_table(path);
  expect_header(path, t.header, {"id", "ratio"});
  require(t.header.size() == 2, path.string() + ": ratio files have exactly columns id,ratio");
  std::vector<std::pair<std::string, double>> out;
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = where(path, t, r);
    const double ratio = parse_double(t.rows[r][1], ctx);
    if (!(ratio > 0.0)) throw ValidationError(ctx + ": density ratio must be > 0");
    out.emplace_back(t.rows[r][0], ratio);
    ids.push_back(t.rows[r][0]);
  }
  check_unique(ids, path);
  return out;
}

void write_ratios(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const std::vector<double>& ratios) {
  require(ids.size() == ratios.size(), "write_ratios: ids and ratios differ in length");
  auto out = open_out(path);
  out << "id,ratio\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << format_exact(ratios[i]) << '\n';
  finish(out, path);
}

std::vector<double> align_by_id(const std::vector<std::string>& ids,
                                const std::vector<std::pair<std::string, double>>& values,
                                const std::string& what) {
  std::unordered_map<std::string, double> by_id;
  for (const auto& [id, v] : values) by_id.emplace(id, v);
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError(what + ": no entry for id '" + id + "'");
    out.push_back(it->second);
  }
  if (by_id.size() != ids.size()) {
    const std::set<std::string> wanted(ids.begin(), ids.end());
    for (const auto& [id, v] : values) {
      if (!wanted.count(id)) {
        throw ValidationError(what + ": id '" + id + "' has no matching score row");
      }
    }
  }
  return out;
}

std::vector<double> align_losses(const std::vector<std::string>& ids,
                                 const std::vector<LossRecord>& records) {
  std::vector<std::pair<std::string, double>> values;
  values.reserve(records.size());
  for (const auto& r : records) values.emplace_back(r.id, r.raw);
  return align_by_id(ids, values, "loss file");
}

SynthDataset read_dataset(const std::filesystem::path& path) {
  const Table t = read_table(path);
  expect_header(path, t.header, {"id", "label"});
  require(t.header.size() >= 3, path.string() + ": no feature columns");
  expect_indexed_columns(path, t.header, 2, "x");
  require(!t.rows.empty(), path.string() + ": no data rows");
  const auto d = static_cast<Eigen::Index>(t.header.size() - 2);
  SynthDataset data;
  data.features.resize(static_cast<Eigen::Index>(t.rows.size()), d);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = where(path, t, r);
    data.ids.push_back(t.rows[r][0]);
    const int label = parse_int(t.rows[r][1], ctx);
    if (label < 0) throw ValidationError(ctx + ": negative label");
    data.labels.push_back(label);
    for (Eigen::Index c = 0; c < d; ++c) {
      data.features(static_cast<Eigen::Index>(r), c) =
          parse_double(t.rows[r][static_cast<std::size_t>(c) + 2], ctx);
    }
  }
  check_unique(data.ids, path);
  return data;
}

void write_dataset(const std::filesystem::path& path, const SynthDataset& data) {
  require(data.ids.size() == data.labels.size() &&
              static_cast<std::size_t>(data.features.rows()) == data.labels.size(),
          "write_dataset: inconsistent dataset");
  auto out = open_out(path);
  out << "id,label";
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) out << ",x" << c;
  out << '\n';
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    out << data.ids[i] << ',' << data.labels[i];
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      out << ',' << format_exact(data.features(static_cast<Eigen::Index>(i), c));
    }
    out << '\n';
  }
  finish(out, path);
}

std::string join_members(const LabelSet& set) {
  LabelSet sorted = set;
  std::sort(sorted.begin(), sorted.end());
  std::string s;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0) s += ';';
    s += std::to_string(sorted[i]);
  }
  return s;
}

void write_prediction_sets(const std::filesystem::path& path, const std::vector<std::string>& ids,
                           const std::vector<int>& labels, const std::vector<LabelSet>& sets) {
  require(ids.size() == sets.size() && labels.size() == sets.size(),
          "write_prediction_sets: ids, labels and sets differ in length");
  auto out = open_out(path);
  out << "id,label,covered,set_size,members\n";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const bool covered = std::find(sets[i].begin(), sets[i].end(), labels[i]) != sets[i].end();
    out << ids[i] << ',' << labels[i] << ',' << (covered ? 1 : 0) << ',' << sets[i].size()
        << ',' << join_members(sets[i]) << '\n';
  }
  finish(out, path);
}

SetRecords read_prediction_sets(const std::filesystem::path& path) {
  const Table t = read_table(path);
  expect_header(path, t.header, {"id", "label", "covered", "set_size", "members"});
  require(t.header.size() == 5, path.string() + ": unexpected extra columns");
  SetRecords out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = where(path, t, r);
    const auto& row = t.rows[r];
    out.ids.push_back(row[0]);
    out.labels.push_back(parse_int(row[1], ctx));
    LabelSet set;
    if (!row[4].empty()) {
      for (const auto& m : split(row[4], ';')) set.push_back(parse_int(m, ctx));
    }
    if (!std::is_sorted(set.begin(), set.end()) ||
        std::adjacent_find(set.begin(), set.end()) != set.end()) {
      throw ValidationError(ctx + ": members must be strictly ascending");
    }
    if (static_cast<std::size_t>(parse_int(row[3], ctx)) != set.size()) {
      throw ValidationError(ctx + ": set_size does not match members");
    }
    const bool covered = std::binary_search(set.begin(), set.end(), out.labels.back());
    if (parse_int(row[2], ctx) != (covered ? 1 : 0)) {
      throw ValidationError(ctx + ": covered flag does not match members");
    }
    out.sets.push_back(std::move(set));
  }
  check_unique(out.ids, path);
  return out;
}

void write_report(const std::filesystem::path& path, const ExperimentReport& report,
                  ReportFormat format) {
  auto out = open_out(path);
  if (format == ReportFormat::kCsv) {
    out << "method,score,shift,alpha,trials,coverage,avg_set_size,severity,cell\n";
    for (const auto& r : report.rows) {
      out << r.method << ',' << r.score << ',' << fixed4(r.shift) << ',' << fixed4(report.alpha)
          << ',' << r.trials << ',' << fixed4(r.coverage) << ',' << fixed4(r.avg_set_size) << ','
          << fixed4(r.severity) << ',' << r.cell() << '\n';
    }
  } else {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"method", r.method},
                      {"score", r.score},
                      {"shift", rounded4(r.shift)},
                      {"alpha", rounded4(report.alpha)},
                      {"trials", r.trials},
                      {"coverage", rounded4(r.coverage)},
                      {"avg_set_size", rounded4(r.avg_set_size)},
                      {"severity", rounded4(r.severity)},
                      {"cell", r.cell()}});
    }
    nlohmann::ordered_json doc = {{"alpha", rounded4(report.alpha)}, {"rows", rows}};
    out << doc.dump(2) << '\n';
  }
  finish(out, path);
}

void write_trials(const std::filesystem::path& path, const std::vector<TrialRecord>& records) {
  auto out = open_out(path);
  out << "trial,method,score,shift,coverage,set_size,severity,q,scale\n";
  for (const auto& r : records) {
    out << r.trial << ',' << r.method << ',' << r.score << ',' << format_exact(r.shift) << ','
        << format_exact(r.coverage) << ',' << format_exact(r.set_size) << ','
        << format_exact(r.severity) << ',' << format_exact(r.q) << ',' << format_exact(r.scale)
        << '\n';
  }
  finish(out, path);
}

void write_plot_data(const std::filesystem::path& path, const ExperimentReport& report) {
  auto out = open_out(path);
  out << "method,score,shift,severity,metric,value\n";
  for (const auto& r : report.rows) {
    const std::string key =
        r.method + ',' + r.score + ',' + fixed4(r.shift) + ',' + fixed4(r.severity);
    out << key << ",coverage," << fixed4(r.coverage) << '\n';
    out << key << ",set_size," << fixed4(r.avg_set_size) << '\n';
  }
  finish(out, path);
}

void write_threshold(const std::filesystem::path& path, const PredictionSets& result,
                     ScoreKind score, WeightMode mode, double epsilon) {
  const auto& t = result.threshold;
  nlohmann::ordered_json doc;
  doc["method"] = std::string(to_string(t.method));
  doc["score"] = std::string(to_string(score));
  doc["alpha"] = t.alpha;
  // JSON has no infinity; an unbounded threshold is written as null.
  doc["q"] = std::isfinite(t.q) ? nlohmann::ordered_json(t.q) : nlohmann::ordered_json(nullptr);
  doc["scale"] = t.scale;
  doc["rl_test"] = t.rl_test ? nlohmann::ordered_json(*t.rl_test) : nlohmann::ordered_json(nullptr);
  if (t.method == Method::kWqlcp) {
    doc["weight_mode"] = std::string(to_string(mode));
    doc["epsilon"] = epsilon;
    if (!result.per_sample_q.empty()) {
      const auto [lo, hi] =
          std::minmax_element(result.per_sample_q.begin(), result.per_sample_q.end());
      doc["q_min"] = *lo;
      doc["q_max"] = *hi;
    }
  }
  doc["num_sets"] = result.sets.size();
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  finish(out, path);
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = m.schema_version;
  doc["dataset"] = m.dataset;
  doc["num_classes"] = m.num_classes;
  doc["dim"] = m.dim;
  doc["counts"] = m.counts;
  doc["files"] = m.files;
  doc["seed"] = m.seed;
  doc["created_by"] = m.created_by;
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  finish(out, path);
}

namespace {

std::size_t count_data_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::size_t rows = 0;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (header) {
      header = false;
      continue;
    }
    ++rows;
  }
  return rows;
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
    Manifest m;
    m.schema_version = doc.at("schema_version").get<int>();
    if (m.schema_version != 1) {
      throw ValidationError(path.string() + ": unsupported schema_version " +
                            std::to_string(m.schema_version));
    }
    m.dataset = doc.at("dataset").get<std::string>();
    m.num_classes = doc.at("num_classes").get<std::size_t>();
    m.dim = doc.at("dim").get<std::size_t>();
    m.counts = doc.at("counts").get<std::map<std::string, std::size_t>>();
    m.files = doc.at("files").get<std::map<std::string, std::string>>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.created_by = doc.value("created_by", "");
    const auto base = path.parent_path();
    for (const auto& [role, rel] : m.files) {
      const auto full = base / rel;
      if (!std::filesystem::exists(full)) {
        throw ValidationError(path.string() + ": file for '" + role + "' not found: " +
                              full.string());
      }
      const auto count = m.counts.find(role);
      if (count != m.counts.end() && count_data_rows(full) != count->second) {
        throw ValidationError(path.string() + ": '" + role + "' has " +
                              std::to_string(count_data_rows(full)) + " rows, manifest says " +
                              std::to_string(count->second));
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace shiftcp::io
