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

// Small dense feed-forward networks with unit dropout.
//
// A network with widths [K_0, ..., K_L] computes
//
//   a_0 = x
//   a_l = relu(W_l a_{l-1} + b_l) .* z_l      l = 1 .. L-1
//   out = W_L a_{L-1} + b_L
//
// where z_l are binary keep vectors. Masks are unscaled: a dropped unit
// contributes 0 and a kept unit contributes its raw activation, so a masked
// pass is exactly a pass through the parameters (W_l, b_l) with rows zeroed.

#ifndef DNC_NN_HPP
#define DNC_NN_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace dnc {

using Rng = std::mt19937_64;

namespace nn {

inline constexpr int kMaxLayers = 4;

enum class Activation { relu, identity };

struct DenseNetwork {
  std::vector<Eigen::MatrixXd> weights;  // layer l: K_l x K_{l-1}
  std::vector<Eigen::VectorXd> biases;   // layer l: K_l
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
  std::vector<int> widths() const;
  Eigen::Index parameter_count() const;
};

/// Binary keep vectors for hidden layers 1..L-1 (stored at index l-1).
struct DropoutMaskSet {
  std::vector<Eigen::VectorXd> keep;
};

/// Per-layer activations recorded by a forward pass, consumed by backward().
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;     // [0] = input, [l] = masked hidden output
  std::vector<Eigen::MatrixXd> preactivations;  // [l-1] = W_l a_{l-1} + b_l
  std::vector<Eigen::VectorXd> masks;           // masks in effect, empty when none
};

struct GradientSet {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  /// Zero gradients shaped like `net`.
  static GradientSet zeros_like(const DenseNetwork& net);
};

/// He-normal weights (variance 2 / fan_in), zero biases.
DenseNetwork make_network(std::span<const int> widths, Rng& rng);

/// All parameters zero.
DenseNetwork zero_network(std::span<const int> widths);

/// Throws ShapeError on inconsistent layer shapes or depth above kMaxLayers,
/// NumericError on non-finite parameters.
void validate(const DenseNetwork& net);

/// Batched forward pass. `inputs` holds one sample per column (K_0 x B).
/// Returns the K_L x B outputs and fills `cache` when given.
Eigen::MatrixXd forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& inputs,
                              const DropoutMaskSet* masks = nullptr,
                              ForwardCache* cache = nullptr);

struct ForwardResult {
  Eigen::VectorXd output;
  ForwardCache cache;
};

ForwardResult forward(const DenseNetwork& net, const Eigen::VectorXd& input,
                      const DropoutMaskSet* masks = nullptr);

/// Gradients of a scalar loss with respect to every weight and bias, summed
/// over the columns of the batch. `output_grad` is dLoss/dOutput (K_L x B).
GradientSet backward(const DenseNetwork& net, const ForwardCache& cache,
                     const Eigen::MatrixXd& output_grad,
                     const DropoutMaskSet* masks = nullptr);

/// Zeroes row k of W_l and entry k of b_l wherever z_l[k] == 0.
DenseNetwork apply_mask_to_params(const DenseNetwork& net, const DropoutMaskSet& masks);

/// Independent Bernoulli(keep_prob) draws for every hidden unit.
DropoutMaskSet sample_masks(const DenseNetwork& net, double keep_prob, Rng& rng);

DropoutMaskSet all_ones_masks(const DenseNetwork& net);

/// Throws ShapeError unless `masks` has one binary vector per hidden layer
/// with matching widths.
void check_masks(const DenseNetwork& net, const DropoutMaskSet& masks);

/// Weight-scaling approximation of the dropout average: every hidden
/// activation is multiplied by keep_prob, folded into the next layer's
/// weights. Identical to `net` when keep_prob == 1.
DenseNetwork mean_field(const DenseNetwork& net, double keep_prob);

/// Parameters as one vector: for each layer, W_l row-major then b_l.
Eigen::VectorXd flatten(const DenseNetwork& net);
Eigen::VectorXd flatten(const GradientSet& grads);

/// Inverse of flatten(); `params` must have parameter_count() entries.
void unflatten(std::span<const double> params, DenseNetwork& net);

/// Sum of squared weights and sum of squared biases over all layers.
double weight_sq_norm(const DenseNetwork& net);
double bias_sq_norm(const DenseNetwork& net);

}  // namespace nn
}  // namespace dnc

#endif  // DNC_NN_HPP
