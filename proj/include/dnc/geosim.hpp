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

// Synthetic bivariate spatial data with spatially varying coregionalization.
//
// Two designs are provided:
//   stationary: h_j, and the loading surfaces psi_11 = 1 + eta_11,
//               psi_22 = 1 + eta_22, psi_12 = eta_12 are independent
//               exponential-kernel GPs with a common range.
//   deepgp:     h_j are Matern-3/2 GPs; each loading entry is a Matern-3/2 GP
//               evaluated on a 5-dimensional latent warping u(s), itself a
//               set of independent Matern-3/2 GPs on the unit square.
// Both use exact dense Cholesky sampling.

#ifndef DNC_GEOSIM_HPP
#define DNC_GEOSIM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dnc/model.hpp"

namespace dnc {

enum class KernelFamily { exponential, matern32 };

struct Kernel {
  KernelFamily family = KernelFamily::exponential;
  double variance = 1.0;      // tau^2
  double length_scale = 1.0;  // phi
};

void validate(const Kernel& k);

/// Covariance at Euclidean distance d >= 0.
double kernel_eval(const Kernel& k, double distance);
double kernel_eval(const Kernel& k, const Eigen::VectorXd& s, const Eigen::VectorXd& t);

/// K_ij = k(points_i, points_j) for the rows of `points` (n x d).
Eigen::MatrixXd gram_matrix(const Kernel& k, const Eigen::MatrixXd& points);

inline constexpr double kDefaultJitter = 1e-8;
inline constexpr double kMaxJitter = 1e-4;

/// Cholesky factor of K + jitter I, reused for repeated draws at fixed points.
/// Jitter doubles from its starting value until the factorization succeeds or
/// exceeds kMaxJitter (NotPsdError).
class GpSampler {
public:
  GpSampler(const Kernel& k, const Eigen::MatrixXd& points, double jitter = kDefaultJitter);

  /// L xi with xi i.i.d. standard normal.
  Eigen::VectorXd sample(Rng& rng) const;

  const Eigen::MatrixXd& lower() const { return lower_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return lower_.rows(); }

private:
  Eigen::MatrixXd lower_;
  double jitter_ = 0.0;
};

Eigen::VectorXd gp_sample(const Kernel& k, const Eigen::MatrixXd& points, double jitter, Rng& rng);

struct SplitSizes {
  long train = 1500;
  long val = 500;
  long test = 500;
};

/// 60/20/20 split of n (train and val rounded down, test takes the rest).
SplitSizes default_split(long n);

/// Ground truth at every simulated location, in generation order.
struct SimTruth {
  Eigen::MatrixXd h;    // n x J factors
  Eigen::MatrixXd psi;  // n x O loading entries, row-major upper triangle
  Eigen::MatrixXd w;    // n x J, Psi h
  Eigen::MatrixXd eps;  // n x J noise
  Eigen::MatrixXd rho;  // n x J(J-1)/2 true cross-correlations, upper triangle
  Eigen::MatrixXd latent;  // n x Q latent warping (deepgp only, else empty)
};

struct SimOutput {
  std::string design;        // "stationary" or "deepgp"
  DesignLayout layout = DesignLayout::per_outcome;
  SpatialDataset all;        // every location in generation order
  Eigen::MatrixXd covariates;  // n x q raw covariates
  SimTruth truth;
  std::vector<Eigen::Index> train_idx, val_idx, test_idx;
  SpatialDataset train, val, test;
  std::vector<std::pair<std::string, double>> params;  // generator settings, echoed to manifests
};

struct StationaryParams {
  long n = 2500;
  std::optional<SplitSizes> split;  // default_split(n) when unset
  double phi = 0.5;
  Eigen::Vector2d beta{1.0, 1.0};
  double sigma2 = 0.5;
  std::uint64_t seed = 0;
};

struct DeepGpParams {
  long n = 2500;
  std::optional<SplitSizes> split;
  double phi_h = 0.2;
  double phi_u = 0.4;
  double phi_psi = 0.3;
  int latent_dim = 5;
  double beta = 0.25;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

SimOutput simulate_stationary(const StationaryParams& params);
SimOutput simulate_deepgp(const DeepGpParams& params);

}  // namespace dnc

#endif  // DNC_GEOSIM_HPP
