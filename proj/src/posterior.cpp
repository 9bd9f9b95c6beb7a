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

#include "dnc/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "dnc/errors.hpp"

namespace dnc {

Rng draw_rng(std::uint64_t seed, int m) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m), 0x6d63u};
  return Rng(seq);
}

DncModel draw_parameters(const DncModel& model, Rng& rng) {
  const ModelMasks masks = sample_model_masks(model, rng);
  DncModel out = model;
  for (int j = 0; j < model.num_outcomes; ++j) {
    out.factor_nets[j] = nn::apply_mask_to_params(model.factor_nets[j], masks.factor[j]);
  }
  for (int o = 0; o < model.num_loadings(); ++o) {
    out.loading_nets[o] = nn::apply_mask_to_params(model.loading_nets[o], masks.loading[o]);
  }
  return out;
}

PosteriorDraws draw_posterior(const DncModel& model, const Eigen::MatrixXd& locations, int num_draws,
                              std::uint64_t seed, int threads) {
  if (num_draws < 1) throw DomainError("posterior needs at least one draw, got " + std::to_string(num_draws));
  validate(model);
  PosteriorDraws draws;
  draws.w.resize(static_cast<std::size_t>(num_draws));

  auto run = [&](int first, int stride) {
    for (int m = first; m < num_draws; m += stride) {
      Rng rng = draw_rng(seed, m);
      draws.w[m] = spatial_effects(draw_parameters(model, rng), locations);
    }
  };
  threads = std::clamp(threads, 1, num_draws);
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
  }
  return draws;
}

std::vector<PredictiveSummary> summarize(const PosteriorDraws& draws, const DncModel& model,
                                         const Eigen::MatrixXd& design) {
  const int M = draws.num_draws();
  if (M < 2) throw DomainError("covariance estimation needs at least two draws");
  const Eigen::Index n = draws.num_locations();
  const int J = draws.num_outcomes();
  if (J != model.num_outcomes) throw ShapeError("draws and model differ in outcome count");
  if (design.rows() != n * J || design.cols() != model.num_covariates) {
    throw ShapeError("design must be (n J) x p for the draw locations");
  }

  std::vector<PredictiveSummary> out(static_cast<std::size_t>(n));
  Eigen::MatrixXd samples(J, M);
  const Eigen::MatrixXd noise = model.sigma2 * Eigen::MatrixXd::Identity(J, J);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int m = 0; m < M; ++m) samples.col(m) = draws.w[m].row(i).transpose();
    PredictiveSummary& s = out[static_cast<std::size_t>(i)];
    // Shift by the first draw so identical draws give an exactly zero covariance.
    const Eigen::VectorXd pivot = samples.col(0);
    const Eigen::MatrixXd shifted = samples.colwise() - pivot;
    const Eigen::VectorXd mean_shift = shifted.rowwise().mean();
    s.mu_w = pivot + mean_shift;
    const Eigen::MatrixXd centered = shifted.colwise() - mean_shift;
    s.sigma_w = (centered * centered.transpose()) / static_cast<double>(M);
    s.sigma_w = 0.5 * (s.sigma_w + s.sigma_w.transpose());
    s.mu_y = design.middleRows(i * J, J) * model.beta + s.mu_w;
    s.sigma_y = s.sigma_w + noise;
    const Eigen::VectorXd half = kInterval95 * s.sigma_y.diagonal().cwiseSqrt();
    s.lower = s.mu_y - half;
    s.upper = s.mu_y + half;
    s.rho = cross_correlation(s.sigma_y);
  }
  return out;
}

Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("covariance must be square");
  const Eigen::VectorXd d = sigma.diagonal();
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (!(d[j] > 0.0)) {
      throw DomainError("correlation undefined: variance of outcome " + std::to_string(j + 1) +
                        " is not positive");
    }
  }
  const Eigen::VectorXd inv = d.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd rho = inv.asDiagonal() * sigma * inv.asDiagonal();
  rho = rho.cwiseMax(-1.0).cwiseMin(1.0);
  rho.diagonal().setOnes();
  return rho;
}

Eigen::MatrixXd true_cross_correlation(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& factor_cov,
                                       double sigma2) {
  if (psi.rows() != psi.cols() || factor_cov.rows() != psi.cols() || factor_cov.cols() != psi.cols()) {
    throw ShapeError("Psi and factor covariance must both be J x J");
  }
  Eigen::MatrixXd sigma = psi * factor_cov * psi.transpose();
  sigma.diagonal().array() += sigma2;
  return cross_correlation(sigma);
}

}  // namespace dnc
