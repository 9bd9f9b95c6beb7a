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

// Spatially varying linear model of coregionalization with network-valued
// factors and loadings:
//
//   y(s) = X(s) beta + Psi(s) h(s) + eps,   eps ~ N(0, sigma2 I_J)
//
// h_j(s) is the output of factor network j; the upper triangle of the J x J
// loading matrix Psi(s) is filled by O = J(J+1)/2 loading networks in
// row-major order (1,1), (1,2), ..., (1,J), (2,2), ..., (J,J).

#ifndef DNC_MODEL_HPP
#define DNC_MODEL_HPP

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dnc/nn.hpp"

namespace dnc {

/// How per-location covariates map onto the J x p design matrix X(s).
///  shared:      every row of X(s) is the same covariate vector (p = q).
///  per_outcome: covariates are grouped by outcome, p = J * q, and X(s) is
///               block diagonal with outcome j using columns [j q, (j+1) q).
enum class DesignLayout { shared, per_outcome };

struct SpatialDataset {
  Eigen::MatrixXd locations;  // n x 2
  Eigen::MatrixXd design;     // (n J) x p, rows [i J, i J + J) hold X(s_i)
  Eigen::MatrixXd outcomes;   // n x J

  Eigen::Index size() const { return locations.rows(); }
  int num_outcomes() const { return static_cast<int>(outcomes.cols()); }
  int num_covariates() const { return static_cast<int>(design.cols()); }

  auto design_at(Eigen::Index i) const {
    return design.middleRows(i * outcomes.cols(), outcomes.cols());
  }
};

/// Throws ShapeError/NumericError/DomainError unless the dataset is nonempty,
/// finite and dimensionally consistent.
void validate(const SpatialDataset& data);

SpatialDataset subset(const SpatialDataset& data, std::span<const Eigen::Index> rows);

/// Expands an n x q covariate table into the stacked (n J) x p design.
Eigen::MatrixXd build_design(const Eigen::MatrixXd& covariates, int num_outcomes, DesignLayout layout);

/// Hidden-layer widths of the factor and loading networks (input 2, output 1).
struct Architecture {
  std::vector<int> factor_hidden{64, 64};
  std::vector<int> loading_hidden{64, 64};
};

struct DncModel {
  int num_outcomes = 0;    // J
  int num_covariates = 0;  // p
  std::vector<nn::DenseNetwork> factor_nets;   // J networks, h_j
  std::vector<nn::DenseNetwork> loading_nets;  // J(J+1)/2 networks, upper triangle of Psi
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  double keep_prob_h = 0.8;
  double keep_prob_psi = 0.8;
  double lambda_w = 1e-4;
  double lambda_b = 1e-4;
  std::uint64_t seed = 0;

  int num_loadings() const { return num_outcomes * (num_outcomes + 1) / 2; }
};

struct ModelSettings {
  Architecture arch;
  double keep_prob_h = 0.8;
  double keep_prob_psi = 0.8;
  double lambda_w = 1e-4;
  double lambda_b = 1e-4;
};

/// Fresh He-initialized model with beta = 0 and sigma2 = 1.
DncModel init_model(int num_outcomes, int num_covariates, const ModelSettings& settings,
                    std::uint64_t seed);

/// Throws on any violated DncModel invariant.
void validate(const DncModel& model);

/// Index o of the loading network filling Psi(row, col), row <= col (0-based).
int loading_index(int row, int col, int num_outcomes);
std::pair<int, int> loading_position(int index, int num_outcomes);

/// One dropout mask set per factor and loading network.
struct ModelMasks {
  std::vector<nn::DropoutMaskSet> factor;
  std::vector<nn::DropoutMaskSet> loading;
};

/// Draws masks for every network in a fixed order: factor nets 0..J-1, then
/// loading nets 0..O-1, each with its family's keep probability.
ModelMasks sample_model_masks(const DncModel& model, Rng& rng);
ModelMasks all_ones_masks(const DncModel& model);

/// Same model with every network replaced by its mean-field counterpart
/// (hidden activations scaled by the keep probability) and keep probabilities
/// set to 1. Evaluating it without masks approximates the dropout average.
DncModel mean_field_model(const DncModel& model);

/// h(s), length J.
Eigen::VectorXd eval_factors(const DncModel& model, const Eigen::Vector2d& s,
                             const ModelMasks* masks = nullptr);

/// Upper-triangular Psi(s), J x J.
Eigen::MatrixXd assemble_loading(const DncModel& model, const Eigen::Vector2d& s,
                                 const ModelMasks* masks = nullptr);

/// X(s) beta + Psi(s) h(s).
Eigen::VectorXd predict_mean(const DncModel& model, const Eigen::Vector2d& s,
                             const Eigen::MatrixXd& design, const ModelMasks* masks = nullptr);

/// w(s_i) = Psi(s_i) h(s_i) for every row of `locations` (n x 2), returned n x J.
Eigen::MatrixXd spatial_effects(const DncModel& model, const Eigen::MatrixXd& locations,
                                const ModelMasks* masks = nullptr);

/// X(s_i) beta + w(s_i) for every record, n x J.
Eigen::MatrixXd predict_means(const DncModel& model, const SpatialDataset& data,
                              const ModelMasks* masks = nullptr);

/// lambda_w sum ||W||^2 + lambda_b sum ||b||^2 over every layer of every network.
double penalty(const DncModel& model);

/// Penalized mini-batch objective
///   1 / (2 |B| sigma2) sum_i ||y_i - yhat_i||^2 + penalty(model)
/// with yhat evaluated under `masks` (none = no dropout).
///
/// Relation to the Monte Carlo ELBO: over the full data (|B| = n) with
/// lambda_w = lambda_b = keep_prob / (2 n), and for the same masks,
///   n * loss = -(log-likelihood - (keep_prob / 2) sum ||theta||^2)
///              - (n J / 2) log(2 pi sigma2).
/// The factor n is the scale between this per-record mean and the summed
/// likelihood of the ELBO.
double loss(const DncModel& model, const SpatialDataset& batch, const ModelMasks* masks = nullptr);

struct ModelGradient {
  std::vector<nn::GradientSet> factor;
  std::vector<nn::GradientSet> loading;
};

/// loss() together with its gradient with respect to every network parameter.
double loss_and_gradient(const DncModel& model, const SpatialDataset& batch,
                         const ModelMasks* masks, ModelGradient& grad);

/// y_i - yhat_i for every record (n x J), no dropout.
Eigen::MatrixXd residual_matrix(const DncModel& model, const SpatialDataset& data);

}  // namespace dnc

#endif  // DNC_MODEL_HPP
