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

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "shiftcp/error.hpp"
#include "shiftcp/vae.hpp"

namespace shiftcp {

namespace {

constexpr const char* kMagic = "shiftcp-vae-checkpoint";
constexpr int kVersion = 1;

struct NamedTensor {
  const char* name;
  Eigen::Index rows;
  Eigen::Index cols;
};

std::vector<NamedTensor> layout(const VaeShape& s) {
  const auto in = static_cast<Eigen::Index>(s.input_dim);
  const auto hid = static_cast<Eigen::Index>(s.hidden_dim);
  const auto lat = static_cast<Eigen::Index>(s.latent_dim);
  return {{"enc_w", hid, in}, {"enc_b", hid, 1}, {"mu_w", lat, hid}, {"mu_b", lat, 1},
          {"lv_w", lat, hid}, {"lv_b", lat, 1},  {"dec_w", hid, lat}, {"dec_b", hid, 1},
          {"out_w", in, hid}, {"out_b", in, 1}};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T expect_field(std::istream& in, const std::string& key, const std::filesystem::path& path) {
  std::string got;
  T value{};
  if (!(in >> got >> value) || got != key) {
    throw ValidationError(path.string() + ": expected header field '" + key + "'");
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const VaeParams& params) {
  params.check_consistent();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open checkpoint for writing: " + path.string());
  out << kMagic << ' ' << kVersion << '\n';
  out << "input_dim " << params.shape.input_dim << '\n';
  out << "hidden_dim " << params.shape.hidden_dim << '\n';
  out << "latent_dim " << params.shape.latent_dim << '\n';
  out << "beta " << format_double(params.beta) << '\n';
  out << "seed " << params.seed << '\n';

  const auto views = params.tensors();
  const auto names = layout(params.shape);
  for (std::size_t t = 0; t < names.size(); ++t) {
    const auto& nt = names[t];
    out << "tensor " << nt.name << ' ' << nt.rows << ' ' << nt.cols << '\n';
    // Storage is column-major; emit row-major.
    for (Eigen::Index r = 0; r < nt.rows; ++r) {
      for (Eigen::Index c = 0; c < nt.cols; ++c) {
        if (c > 0) out << ' ';
        out << format_double(views[t][c * nt.rows + r]);
      }
      out << '\n';
    }
  }
  out << "end\n";
  if (!out) throw ValidationError("failed writing checkpoint: " + path.string());
}

VaeParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw ValidationError(path.string() + ": not a shiftcp VAE checkpoint");
  }
  if (version != kVersion) {
    throw ValidationError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  VaeShape shape;
  shape.input_dim = expect_field<std::size_t>(in, "input_dim", path);
  shape.hidden_dim = expect_field<std::size_t>(in, "hidden_dim", path);
  shape.latent_dim = expect_field<std::size_t>(in, "latent_dim", path);
  // Parse beta through strtod so that %.17g text restores bit-exactly.
  const auto beta_text = expect_field<std::string>(in, "beta", path);
  const auto seed = expect_field<std::uint64_t>(in, "seed", path);

  VaeParams params = VaeParams::zeros(shape);
  params.beta = std::stod(beta_text);
  params.seed = seed;
  auto views = params.tensors();
  const auto names = layout(shape);
  for (std::size_t t = 0; t < names.size(); ++t) {
    const auto& nt = names[t];
    std::string tag;
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "tensor" || name != nt.name ||
        rows != nt.rows || cols != nt.cols) {
      throw ValidationError(path.string() + ": expected tensor " + nt.name + " " +
                            std::to_string(nt.rows) + "x" + std::to_string(nt.cols));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::string token;
        if (!(in >> token)) {
          throw ValidationError(path.string() + ": truncated tensor " + nt.name);
        }
        try {
          views[t][c * rows + r] = std::stod(token);
        } catch (const std::exception&) {
          throw ValidationError(path.string() + ": bad value '" + token + "' in tensor " +
                                nt.name);
        }
      }
    }
  }
  std::string end;
  if (!(in >> end) || end != "end") {
    throw ValidationError(path.string() + ": missing end marker");
  }
  if (!params.all_finite()) {
    throw ValidationError(path.string() + ": checkpoint contains non-finite values");
  }
  return params;
}

}  // namespace shiftcp
