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

#include "dnc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "dnc/errors.hpp"
#include "dnc/metrics.hpp"

namespace dnc {

namespace {

Eigen::VectorXd flatten_params(const DncModel& model) {
  Eigen::Index count = 0;
  for (const auto& net : model.factor_nets) count += net.parameter_count();
  for (const auto& net : model.loading_nets) count += net.parameter_count();
  Eigen::VectorXd out(count);
  Eigen::Index pos = 0;
  auto put = [&](const nn::DenseNetwork& net) {
    const Eigen::VectorXd v = nn::flatten(net);
    out.segment(pos, v.size()) = v;
    pos += v.size();
  };
  for (const auto& net : model.factor_nets) put(net);
  for (const auto& net : model.loading_nets) put(net);
  return out;
}

void unflatten_params(const Eigen::VectorXd& params, DncModel& model) {
  Eigen::Index pos = 0;
  auto take = [&](nn::DenseNetwork& net) {
    const Eigen::Index k = net.parameter_count();
    nn::unflatten(std::span<const double>(params.data() + pos, static_cast<std::size_t>(k)), net);
    pos += k;
  };
  for (auto& net : model.factor_nets) take(net);
  for (auto& net : model.loading_nets) take(net);
}

Eigen::VectorXd flatten_grad(const ModelGradient& grad, Eigen::Index count) {
  Eigen::VectorXd out(count);
  Eigen::Index pos = 0;
  auto put = [&](const nn::GradientSet& g) {
    const Eigen::VectorXd v = nn::flatten(g);
    out.segment(pos, v.size()) = v;
    pos += v.size();
  };
  for (const auto& g : grad.factor) put(g);
  for (const auto& g : grad.loading) put(g);
  if (pos != count) throw ShapeError("gradient size differs from parameter count");
  return out;
}

double mean_rmspe(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) total += rmspe(truth.col(j), pred.col(j));
  return total / static_cast<double>(truth.cols());
}

// Closed-form refresh of beta and sigma2 on deterministic predictions.
void refresh_regression(DncModel& model, const SpatialDataset& train, Sigma2Normalization norm) {
  const DncModel view = mean_field_model(model);
  model.beta = update_beta(view, train);
  DncModel with_beta = view;
  with_beta.beta = model.beta;
  model.sigma2 = update_sigma2(with_beta, train, norm);
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError("learning_rate must be a non-negative finite number");
  }
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
  if (!(cfg.adam_beta1 > 0.0 && cfg.adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
  if (!(cfg.adam_beta2 > 0.0 && cfg.adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
  if (!(cfg.adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  auto prob_ok = [](double p) { return p > 0.0 && p <= 1.0; };
  if (!prob_ok(cfg.keep_prob_h) || !prob_ok(cfg.keep_prob_psi)) {
    throw ConfigError("keep probabilities must lie in (0, 1]");
  }
  if (!(cfg.lambda_w >= 0.0) || !(cfg.lambda_b >= 0.0)) throw ConfigError("penalties must be non-negative");
}

void sgd_or_adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                      OptimizerState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size()) {
    throw ShapeError("gradient has " + std::to_string(grads.size()) + " entries, parameters " +
                     std::to_string(params.size()));
  }
  if (!grads.allFinite()) throw NumericError("non-finite gradient");
  if (cfg.optimizer == Optimizer::sgd) {
    params -= cfg.learning_rate * grads;
    ++state.step;
    return;
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  state.m = b1 * state.m + (1.0 - b1) * grads;
  state.v = b2 * state.v + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  params.array() -= cfg.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + cfg.adam_eps);
}

Eigen::VectorXd update_beta(const DncModel& model, const SpatialDataset& data, const ModelMasks* masks) {
  validate(data);
  const int p = model.num_covariates;
  if (data.num_covariates() != p || data.num_outcomes() != model.num_outcomes) {
    throw ShapeError("dataset J/p differ from the model");
  }
  if (p == 0) return Eigen::VectorXd(0);
  const Eigen::MatrixXd w = spatial_effects(model, data.locations, masks);  // n x J
  const Eigen::MatrixXd target = data.outcomes - w;
  const Eigen::MatrixXd tt = target.transpose();  // J x n, column-major = stacked rows
  const Eigen::Map<const Eigen::VectorXd> r(tt.data(), tt.size());

  Eigen::MatrixXd gram = data.design.transpose() * data.design;
  const Eigen::VectorXd rhs = data.design.transpose() * r;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    std::clog << "warning: singular normal equations for beta, adding ridge " << kBetaRidge << "\n";
    gram.diagonal().array() += kBetaRidge;
    llt.compute(gram);
    if (llt.info() != Eigen::Success) {
      return gram.completeOrthogonalDecomposition().solve(rhs);
    }
  }
  return llt.solve(rhs);
}

double update_sigma2(const DncModel& model, const SpatialDataset& data, Sigma2Normalization norm) {
  const Eigen::MatrixXd r = residual_matrix(model, data);
  double denom = static_cast<double>(r.rows());
  if (norm == Sigma2Normalization::per_component) denom *= static_cast<double>(r.cols());
  return std::max(r.squaredNorm() / denom, kSigma2Floor);
}

FitResult fit(DncModel model, const SpatialDataset& train, const SpatialDataset& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(cfg);
  validate(train);
  validate(val);
  if (train.num_outcomes() != val.num_outcomes() || train.num_covariates() != val.num_covariates()) {
    throw ShapeError("training and validation data differ in J or p");
  }
  if (train.num_outcomes() != model.num_outcomes || train.num_covariates() != model.num_covariates) {
    throw ShapeError("data J/p differ from the model");
  }
  model.keep_prob_h = cfg.keep_prob_h;
  model.keep_prob_psi = cfg.keep_prob_psi;
  model.lambda_w = cfg.lambda_w;
  model.lambda_b = cfg.lambda_b;
  model.seed = cfg.seed;
  validate(model);

  Rng rng(cfg.seed);
  refresh_regression(model, train, cfg.sigma2_normalization);

  const Eigen::Index n = train.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Eigen::VectorXd params = flatten_params(model);
  OptimizerState opt;
  ModelGradient grad;

  TrainReport report;
  DncModel best = model;
  double best_rmspe = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      const SpatialDataset batch =
          subset(train, std::span<const Eigen::Index>(order.data() + start, static_cast<std::size_t>(len)));
      const ModelMasks masks = sample_model_masks(model, rng);
      double value = 0.0;
      try {
        value = loss_and_gradient(model, batch, &masks, grad);
      } catch (const NumericError&) {
        throw DivergedError(epoch, cfg.learning_rate);
      }
      if (!std::isfinite(value)) throw DivergedError(epoch, cfg.learning_rate);
      const Eigen::VectorXd g = flatten_grad(grad, params.size());
      if (!g.allFinite()) throw DivergedError(epoch, cfg.learning_rate);
      sgd_or_adam_step(params, g, opt, cfg);
      unflatten_params(params, model);
      loss_sum += value;
      ++batches;
    }

    try {
      refresh_regression(model, train, cfg.sigma2_normalization);
    } catch (const NumericError&) {
      throw DivergedError(epoch, cfg.learning_rate);
    }
    const double train_loss = loss_sum / batches;
    const double val_rmspe = mean_rmspe(val.outcomes, predict_means(mean_field_model(model), val));
    if (!std::isfinite(train_loss) || !std::isfinite(val_rmspe)) throw DivergedError(epoch, cfg.learning_rate);

    report.train_loss.push_back(train_loss);
    report.val_rmspe.push_back(val_rmspe);
    report.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch, train_loss, val_rmspe);

    if (val_rmspe < best_rmspe) {
      best_rmspe = val_rmspe;
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  report.beta = best.beta;
  report.sigma2 = best.sigma2;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(best), std::move(report)};
}

}  // namespace dnc
