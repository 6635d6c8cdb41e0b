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

#include "shiftcp/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "shiftcp/error.hpp"
#include "shiftcp/rng.hpp"

namespace shiftcp {

namespace {

constexpr double kGradCheckFloor = 1e-7;

void glorot_fill(Eigen::MatrixXd& w, std::mt19937_64& engine) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(engine);
  }
}

}  // namespace

VaeParams VaeParams::zeros(const VaeShape& shape) {
  require(shape.input_dim >= 1 && shape.hidden_dim >= 1 && shape.latent_dim >= 1,
          "VAE dimensions must be >= 1");
  const auto in = static_cast<Eigen::Index>(shape.input_dim);
  const auto hid = static_cast<Eigen::Index>(shape.hidden_dim);
  const auto lat = static_cast<Eigen::Index>(shape.latent_dim);
  VaeParams p;
  p.shape = shape;
  p.enc_w = Eigen::MatrixXd::Zero(hid, in);
  p.enc_b = Eigen::VectorXd::Zero(hid);
  p.mu_w = Eigen::MatrixXd::Zero(lat, hid);
  p.mu_b = Eigen::VectorXd::Zero(lat);
  p.lv_w = Eigen::MatrixXd::Zero(lat, hid);
  p.lv_b = Eigen::VectorXd::Zero(lat);
  p.dec_w = Eigen::MatrixXd::Zero(hid, lat);
  p.dec_b = Eigen::VectorXd::Zero(hid);
  p.out_w = Eigen::MatrixXd::Zero(in, hid);
  p.out_b = Eigen::VectorXd::Zero(in);
  return p;
}

VaeParams VaeParams::glorot(const VaeShape& shape, std::uint64_t seed) {
  VaeParams p = zeros(shape);
  p.seed = seed;
  std::mt19937_64 engine(derive_seed(seed, SeedStream::kVae, 2));
  glorot_fill(p.enc_w, engine);
  glorot_fill(p.mu_w, engine);
  glorot_fill(p.lv_w, engine);
  glorot_fill(p.dec_w, engine);
  glorot_fill(p.out_w, engine);
  return p;
}

void VaeParams::check_consistent() const {
  const auto in = static_cast<Eigen::Index>(shape.input_dim);
  const auto hid = static_cast<Eigen::Index>(shape.hidden_dim);
  const auto lat = static_cast<Eigen::Index>(shape.latent_dim);
  const bool ok = enc_w.rows() == hid && enc_w.cols() == in && enc_b.size() == hid &&
                  mu_w.rows() == lat && mu_w.cols() == hid && mu_b.size() == lat &&
                  lv_w.rows() == lat && lv_w.cols() == hid && lv_b.size() == lat &&
                  dec_w.rows() == hid && dec_w.cols() == lat && dec_b.size() == hid &&
                  out_w.rows() == in && out_w.cols() == hid && out_b.size() == in;
  require(ok, "VAE parameter shapes are inconsistent with the recorded dimensions");
}

bool VaeParams::all_finite() const {
  for (const auto& t : tensors()) {
    if (!t.allFinite()) return false;
  }
  return true;
}

std::size_t VaeParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.size());
  return n;
}

namespace {

template <typename Map, typename Matrix>
Map as_flat(Matrix& m) {
  return Map(m.data(), m.size());
}

}  // namespace

std::vector<Eigen::Map<Eigen::VectorXd>> VaeParams::tensors() {
  using M = Eigen::Map<Eigen::VectorXd>;
  return {as_flat<M>(enc_w), as_flat<M>(enc_b), as_flat<M>(mu_w), as_flat<M>(mu_b),
          as_flat<M>(lv_w),  as_flat<M>(lv_b),  as_flat<M>(dec_w), as_flat<M>(dec_b),
          as_flat<M>(out_w), as_flat<M>(out_b)};
}

std::vector<Eigen::Map<const Eigen::VectorXd>> VaeParams::tensors() const {
  using M = Eigen::Map<const Eigen::VectorXd>;
  return {as_flat<M>(enc_w), as_flat<M>(enc_b), as_flat<M>(mu_w), as_flat<M>(mu_b),
          as_flat<M>(lv_w),  as_flat<M>(lv_b),  as_flat<M>(dec_w), as_flat<M>(dec_b),
          as_flat<M>(out_w), as_flat<M>(out_b)};
}

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be > 0");
  require(batch_size >= 1, "batch size must be >= 1");
  require(beta >= 0.0 && std::isfinite(beta), "beta must be >= 0");
  require(latent_dim >= 1 && hidden_dim >= 1, "latent and hidden dims must be >= 1");
  require(weight_decay >= 0.0, "weight decay must be >= 0");
}

Encoding encode(const Eigen::VectorXd& x, const VaeParams& params) {
  require(static_cast<std::size_t>(x.size()) == params.shape.input_dim,
          "encode: input has " + std::to_string(x.size()) + " features, expected " +
              std::to_string(params.shape.input_dim));
  const Eigen::VectorXd h = (params.enc_w * x + params.enc_b).array().tanh().matrix();
  return {params.mu_w * h + params.mu_b, params.lv_w * h + params.lv_b};
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var,
                               const Eigen::VectorXd& noise) {
  require(mu.size() == log_var.size() && mu.size() == noise.size(),
          "reparameterize: shape mismatch");
  return mu.array() + (0.5 * log_var.array()).exp() * noise.array();
}

Eigen::VectorXd decode(const Eigen::VectorXd& z, const VaeParams& params) {
  require(static_cast<std::size_t>(z.size()) == params.shape.latent_dim,
          "decode: latent has " + std::to_string(z.size()) + " entries, expected " +
              std::to_string(params.shape.latent_dim));
  const Eigen::VectorXd g = (params.dec_w * z + params.dec_b).array().tanh().matrix();
  return params.out_w * g + params.out_b;
}

double recon_loss(const Eigen::VectorXd& x, const VaeParams& params) {
  const Encoding enc = encode(x, params);
  return (x - decode(enc.mu, params)).squaredNorm();
}

double kl_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
  require(mu.size() == log_var.size(), "kl_gaussian: shape mismatch");
  const auto lv = log_var.array();
  return -0.5 * (1.0 + lv - mu.array().square() - lv.exp()).sum();
}

ElboTerms elbo(const VaeParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& noise,
               double beta, VaeParams* grad) {
  require(static_cast<std::size_t>(x.rows()) == p.shape.input_dim, "elbo: batch row mismatch");
  require(static_cast<std::size_t>(noise.rows()) == p.shape.latent_dim &&
              noise.cols() == x.cols(),
          "elbo: noise shape mismatch");
  const double b = static_cast<double>(x.cols());

  const Eigen::MatrixXd h = ((p.enc_w * x).colwise() + p.enc_b).array().tanh().matrix();
  const Eigen::MatrixXd mu = (p.mu_w * h).colwise() + p.mu_b;
  const Eigen::MatrixXd lv = (p.lv_w * h).colwise() + p.lv_b;
  const Eigen::ArrayXXd sd = (0.5 * lv.array()).exp();
  const Eigen::MatrixXd z = (mu.array() + sd * noise.array()).matrix();
  const Eigen::MatrixXd g = ((p.dec_w * z).colwise() + p.dec_b).array().tanh().matrix();
  const Eigen::MatrixXd x_hat = (p.out_w * g).colwise() + p.out_b;

  const Eigen::MatrixXd diff = x_hat - x;
  ElboTerms terms;
  terms.beta = beta;
  terms.recon = diff.squaredNorm() / b;
  terms.kl = -0.5 * (1.0 + lv.array() - mu.array().square() - lv.array().exp()).sum() / b;

  if (grad != nullptr) {
    VaeParams& d = *grad;
    d = VaeParams::zeros(p.shape);
    d.beta = p.beta;
    d.seed = p.seed;

    const Eigen::MatrixXd d_xhat = (2.0 / b) * diff;
    d.out_w = d_xhat * g.transpose();
    d.out_b = d_xhat.rowwise().sum();
    const Eigen::MatrixXd d_a2 =
        ((p.out_w.transpose() * d_xhat).array() * (1.0 - g.array().square())).matrix();
    d.dec_w = d_a2 * z.transpose();
    d.dec_b = d_a2.rowwise().sum();
    const Eigen::MatrixXd d_z = p.dec_w.transpose() * d_a2;

    const double kl_scale = beta / b;
    const Eigen::MatrixXd d_mu = d_z + kl_scale * mu;
    const Eigen::MatrixXd d_lv =
        (d_z.array() * noise.array() * 0.5 * sd +
         kl_scale * 0.5 * (lv.array().exp() - 1.0))
            .matrix();
    d.mu_w = d_mu * h.transpose();
    d.mu_b = d_mu.rowwise().sum();
    d.lv_w = d_lv * h.transpose();
    d.lv_b = d_lv.rowwise().sum();
    const Eigen::MatrixXd d_a1 =
        ((p.mu_w.transpose() * d_mu + p.lv_w.transpose() * d_lv).array() *
         (1.0 - h.array().square()))
            .matrix();
    d.enc_w = d_a1 * x.transpose();
    d.enc_b = d_a1.rowwise().sum();
  }
  return terms;
}

TrainResult train(const Eigen::MatrixXd& data, const TrainConfig& config) {
  config.validate();
  require(data.rows() >= 1, "VAE training set is empty");
  require(data.allFinite(), "VAE training data contains non-finite values");

  const VaeShape shape{static_cast<std::size_t>(data.cols()), config.hidden_dim,
                       config.latent_dim};
  TrainResult result;
  result.params = VaeParams::glorot(shape, config.seed);
  result.params.beta = config.beta;
  VaeParams& params = result.params;

  std::mt19937_64 shuffle_engine(derive_seed(config.seed, SeedStream::kVae, 0));
  std::mt19937_64 noise_engine(derive_seed(config.seed, SeedStream::kVae, 1));
  std::normal_distribution<double> normal(0.0, 1.0);

  auto param_views = params.tensors();
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
  for (const auto& t : param_views) {
    first_moment.push_back(Eigen::VectorXd::Zero(t.size()));
    second_moment.push_back(Eigen::VectorXd::Zero(t.size()));
  }

  const auto n = static_cast<std::size_t>(data.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  VaeParams grad;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_engine);
    double epoch_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Eigen::MatrixXd batch = data(rows, Eigen::all).transpose();
      Eigen::MatrixXd noise(static_cast<Eigen::Index>(shape.latent_dim), batch.cols());
      for (Eigen::Index c = 0; c < noise.cols(); ++c) {
        for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = normal(noise_engine);
      }

      const ElboTerms terms = elbo(params, batch, noise, config.beta, &grad);
      const double loss = terms.loss();
      if (!std::isfinite(loss)) {
        throw NumericalError("VAE training diverged: non-finite loss at epoch " +
                             std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch_index + 1));
      }
      epoch_total += loss * static_cast<double>(stop - start);

      ++step;
      const double bias1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      auto grad_views = grad.tensors();
      for (std::size_t t = 0; t < param_views.size(); ++t) {
        auto& m = first_moment[t];
        auto& v = second_moment[t];
        const auto& g = grad_views[t];
        m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g;
        v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g.cwiseAbs2();
        // Even tensor slots are weight matrices; biases are not decayed.
        if (t % 2 == 0 && config.weight_decay > 0.0) {
          param_views[t] *= 1.0 - config.learning_rate * config.weight_decay;
        }
        param_views[t].array() -=
            config.learning_rate * (m.array() / bias1) /
            ((v.array() / bias2).sqrt() + config.adam_epsilon);
      }
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(n));
  }
  if (!params.all_finite()) {
    throw NumericalError("VAE training produced non-finite parameters");
  }
  return result;
}

namespace {

void check_loss_input(const Eigen::MatrixXd& data, const VaeParams& params) {
  require(static_cast<std::size_t>(data.cols()) == params.shape.input_dim,
          "dataset has " + std::to_string(data.cols()) + " features, VAE expects " +
              std::to_string(params.shape.input_dim));
}

}  // namespace

std::vector<double> batch_losses(const Eigen::MatrixXd& data, const VaeParams& params) {
  check_loss_input(data, params);
  std::vector<double> out(static_cast<std::size_t>(data.rows()));
  const auto n = static_cast<std::ptrdiff_t>(data.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = recon_loss(data.row(i).transpose(), params);
  }
  return out;
}

namespace serial {

std::vector<double> batch_losses(const Eigen::MatrixXd& data, const VaeParams& params) {
  check_loss_input(data, params);
  std::vector<double> out(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = recon_loss(data.row(i).transpose(), params);
  }
  return out;
}

}  // namespace serial

std::vector<LossRecord> make_loss_records(const std::vector<std::string>& ids,
                                          std::span<const double> raw, double normalizer) {
  require(ids.size() == raw.size(), "loss records: id and loss counts differ");
  require(normalizer > 0.0 && std::isfinite(normalizer), "loss normalizer must be > 0");
  std::vector<LossRecord> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(raw[i] >= 0.0 && std::isfinite(raw[i]), "loss for '" + ids[i] + "' is invalid");
    out[i] = {ids[i], raw[i], raw[i] / normalizer};
  }
  return out;
}

double mean_loss(std::span<const double> raw) {
  require(!raw.empty(), "mean of an empty loss batch");
  double total = 0.0;
  for (double v : raw) total += v;
  return total / static_cast<double>(raw.size());
}

double grad_check(const VaeParams& params, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& noise, double beta, double step) {
  require(step > 0.0, "finite-difference step must be > 0");
  const Eigen::MatrixXd batch = x;
  const Eigen::MatrixXd eps = noise;
  VaeParams analytic;
  elbo(params, batch, eps, beta, &analytic);

  VaeParams probe = params;
  auto probe_views = probe.tensors();
  const auto analytic_views = std::as_const(analytic).tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < probe_views.size(); ++t) {
    for (Eigen::Index k = 0; k < probe_views[t].size(); ++k) {
      const double saved = probe_views[t][k];
      probe_views[t][k] = saved + step;
      const double up = elbo(probe, batch, eps, beta).loss();
      probe_views[t][k] = saved - step;
      const double down = elbo(probe, batch, eps, beta).loss();
      probe_views[t][k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic_views[t][k];
      const double rel =
          std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), kGradCheckFloor);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace shiftcp
