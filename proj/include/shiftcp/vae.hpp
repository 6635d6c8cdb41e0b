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

// Dense beta-VAE with hand-written backpropagation.
//
//   encoder:  h = tanh(W_h x + b_h);  mu = W_mu h + b_mu;  log_var = W_lv h + b_lv
//   sampling: z = mu + exp(log_var / 2) * noise
//   decoder:  g = tanh(W_g z + b_g);  x_hat = W_o g + b_o
//
// Per-sample objective: ||x - x_hat||^2 + beta * KL(N(mu, diag(exp(log_var))) || N(0, I)).
// Matrices hold one sample per column.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace shiftcp {

struct VaeShape {
  std::size_t input_dim = 8;
  std::size_t hidden_dim = 32;
  std::size_t latent_dim = 4;

  bool operator==(const VaeShape&) const = default;
};

struct VaeParams {
  VaeShape shape;
  double beta = 1.2;
  std::uint64_t seed = 0;

  Eigen::MatrixXd enc_w;  // hidden x input
  Eigen::VectorXd enc_b;
  Eigen::MatrixXd mu_w;   // latent x hidden
  Eigen::VectorXd mu_b;
  Eigen::MatrixXd lv_w;   // latent x hidden
  Eigen::VectorXd lv_b;
  Eigen::MatrixXd dec_w;  // hidden x latent
  Eigen::VectorXd dec_b;
  Eigen::MatrixXd out_w;  // input x hidden
  Eigen::VectorXd out_b;

  /// All tensors zero-filled at the given shape.
  static VaeParams zeros(const VaeShape& shape);
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static VaeParams glorot(const VaeShape& shape, std::uint64_t seed);

  void check_consistent() const;
  bool all_finite() const;
  std::size_t parameter_count() const;

  /// Flattened views in a fixed tensor order, used by the optimizer and the
  /// gradient checker.
  std::vector<Eigen::Map<Eigen::VectorXd>> tensors();
  std::vector<Eigen::Map<const Eigen::VectorXd>> tensors() const;
};

struct ElboTerms {
  double recon = 0.0;  // mean of ||x - x_hat||^2 over the batch
  double kl = 0.0;     // mean KL over the batch, nats
  double beta = 1.0;

  double loss() const { return recon + beta * kl; }
};

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  double beta = 1.2;
  std::size_t latent_dim = 4;
  std::size_t hidden_dim = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct TrainResult {
  VaeParams params;
  std::vector<double> epoch_loss;  // mean objective per epoch
};

struct Encoding {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_var;
};

Encoding encode(const Eigen::VectorXd& x, const VaeParams& params);
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var,
                               const Eigen::VectorXd& noise);
Eigen::VectorXd decode(const Eigen::VectorXd& z, const VaeParams& params);

/// ||x - decode(mu(x))||^2 along the deterministic posterior-mean path.
double recon_loss(const Eigen::VectorXd& x, const VaeParams& params);

/// -1/2 sum(1 + log_var - mu^2 - exp(log_var)).
double kl_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);

/// Batch objective for columns of `batch` with explicit latent noise (one
/// column per sample). When `grad` is non-null it receives d(loss)/d(params)
/// laid out like params.tensors().
ElboTerms elbo(const VaeParams& params, const Eigen::MatrixXd& batch,
               const Eigen::MatrixXd& noise, double beta, VaeParams* grad = nullptr);

/// Mini-batch AdamW on recon + beta * kl. `data` holds one sample per row.
/// Throws NumericalError on a non-finite loss.
TrainResult train(const Eigen::MatrixXd& data, const TrainConfig& config);

struct LossRecord {
  std::string id;
  double raw = 0.0;
  double normalized = 0.0;
};

/// Pairs ids with raw losses and divides by `normalizer` (> 0).
std::vector<LossRecord> make_loss_records(const std::vector<std::string>& ids,
                                          std::span<const double> raw, double normalizer);

double mean_loss(std::span<const double> raw);

/// Per-row recon_loss, OpenMP-parallel.
std::vector<double> batch_losses(const Eigen::MatrixXd& data, const VaeParams& params);

namespace serial {
std::vector<double> batch_losses(const Eigen::MatrixXd& data, const VaeParams& params);
}  // namespace serial

/// Max relative error between analytic and central-difference gradients of
/// the single-sample objective at x with fixed noise:
///   |g_a - g_n| / max(|g_a| + |g_n|, 1e-7).
double grad_check(const VaeParams& params, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& noise, double beta, double step);

// Text checkpoint; layout documented in docs/formats.md.
void save_checkpoint(const std::filesystem::path& path, const VaeParams& params);
VaeParams load_checkpoint(const std::filesystem::path& path);

}  // namespace shiftcp
