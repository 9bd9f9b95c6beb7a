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

// Monte Carlo dropout posterior for the spatial effect w(s) = Psi(s) h(s).
//
// Draw m samples one mask set per network, zeroes the masked rows of the
// trained parameters and evaluates every requested location with that single
// parameter draw, so each draw is a coherent surface. Draw m uses its own RNG
// stream seeded from (seed, m); results do not depend on thread count or on
// how locations are chunked.

#ifndef DNC_POSTERIOR_HPP
#define DNC_POSTERIOR_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dnc/model.hpp"

namespace dnc {

inline constexpr double kInterval95 = 1.96;
inline constexpr int kDefaultDraws = 200;

struct PosteriorDraws {
  std::vector<Eigen::MatrixXd> w;  // one n x J matrix per draw

  int num_draws() const { return static_cast<int>(w.size()); }
  Eigen::Index num_locations() const { return w.empty() ? 0 : w.front().rows(); }
  int num_outcomes() const { return w.empty() ? 0 : static_cast<int>(w.front().cols()); }
};

/// RNG for draw `m` of a posterior sample with the given seed.
Rng draw_rng(std::uint64_t seed, int m);

/// Masked parameter draw of the whole model for one posterior sample.
DncModel draw_parameters(const DncModel& model, Rng& rng);

/// M stochastic forward passes at `locations` (n x 2). `threads` > 1 splits
/// draws across worker threads without changing the result.
PosteriorDraws draw_posterior(const DncModel& model, const Eigen::MatrixXd& locations, int num_draws,
                              std::uint64_t seed, int threads = 1);

struct PredictiveSummary {
  Eigen::VectorXd mu_w;
  Eigen::MatrixXd sigma_w;
  Eigen::VectorXd mu_y;
  Eigen::MatrixXd sigma_y;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd rho;
};

/// Gaussian summaries at every location. `design` is the stacked (n J) x p
/// design for the draw locations. Covariances use the 1/M normalization.
std::vector<PredictiveSummary> summarize(const PosteriorDraws& draws, const DncModel& model,
                                         const Eigen::MatrixXd& design);

/// rho_jk = S_jk / sqrt(S_jj S_kk); throws DomainError on a non-positive diagonal.
Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& sigma);

/// Correlation implied by Psi diag(factor_var) Psi^T + sigma2 I.
Eigen::MatrixXd true_cross_correlation(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& factor_cov,
                                       double sigma2);

}  // namespace dnc

#endif  // DNC_POSTERIOR_HPP
