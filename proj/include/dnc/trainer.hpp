/*
 * Copyright 2026 The DNC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DNC_TRAINER_HPP
#define DNC_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dnc/model.hpp"

namespace dnc {

enum class Optimizer { adam, sgd };

/// Divisor of the summed squared residual norm in the noise-variance update.
///  per_location:  (1/n)   sum_i ||r_i||^2
///  per_component: (1/nJ)  sum_i ||r_i||^2, the maximum-likelihood estimate
///                 of sigma2 under eps ~ N(0, sigma2 I_J).
enum class Sigma2Normalization { per_location, per_component };

struct TrainConfig {
  double learning_rate = 1e-2;
  int batch_size = 64;
  int max_epochs = 1000;
  int patience = 50;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double keep_prob_h = 0.8;
  double keep_prob_psi = 0.8;
  double lambda_w = 1e-4;
  double lambda_b = 1e-4;
  Sigma2Normalization sigma2_normalization = Sigma2Normalization::per_component;
};

/// Throws ConfigError on out-of-range settings. A zero learning rate is
/// accepted and freezes the network parameters.
void validate(const TrainConfig& cfg);

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;                 // 1-based epoch whose parameters were returned
  std::vector<double> train_loss;     // mean penalized mini-batch loss per epoch
  std::vector<double> val_rmspe;      // outcome-averaged validation RMSPE per epoch
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  DncModel model;
  TrainReport report;
};

/// Called after every epoch with (epoch, train loss, validation RMSPE).
using EpochCallback = std::function<void(int, double, double)>;

/// Mini-batch training with fresh dropout masks per batch, closed-form
/// beta/sigma2 refresh after each epoch, and early stopping on validation
/// RMSPE. Returns the parameters of the best validation epoch.
FitResult fit(DncModel model, const SpatialDataset& train, const SpatialDataset& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// SGD: theta -= lr g. Adam: bias-corrected first/second moment update.
void sgd_or_adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                      OptimizerState& state, const TrainConfig& cfg);

/// Least-squares beta for the current networks:
///   argmin_beta sum_i ||y_i - X_i beta - Psi(s_i) h(s_i)||^2.
/// Falls back to a 1e-8 ridge when the normal equations are singular.
Eigen::VectorXd update_beta(const DncModel& model, const SpatialDataset& data,
                            const ModelMasks* masks = nullptr);

/// Summed squared residual norm divided by n (or nJ), floored at 1e-8.
double update_sigma2(const DncModel& model, const SpatialDataset& data,
                     Sigma2Normalization norm = Sigma2Normalization::per_location);

inline constexpr double kSigma2Floor = 1e-8;
inline constexpr double kBetaRidge = 1e-8;

}  // namespace dnc

#endif  // DNC_TRAINER_HPP
