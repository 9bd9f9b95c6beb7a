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

#include "dnc/nn.hpp"

#include <cmath>
#include <string>

#include "dnc/errors.hpp"

namespace dnc::nn {

namespace {

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void check_cache(const DenseNetwork& net, const ForwardCache& cache, const DropoutMaskSet* masks) {
  const int L = net.num_layers();
  if (static_cast<int>(cache.activations.size()) != L ||
      static_cast<int>(cache.preactivations.size()) != L) {
    throw ConsistencyError("forward cache has " + std::to_string(cache.activations.size()) +
                           " layers, network has " + std::to_string(L));
  }
  for (int l = 0; l < L; ++l) {
    if (cache.preactivations[l].rows() != net.weights[l].rows() ||
        cache.activations[l].rows() != net.weights[l].cols()) {
      throw ConsistencyError("forward cache does not match network layer " + std::to_string(l + 1));
    }
  }
  const bool masked = masks != nullptr;
  if (masked != !cache.masks.empty() && L > 1) {
    throw ConsistencyError("backward mask regime differs from the forward pass");
  }
  if (masked) {
    for (int l = 0; l + 1 < L; ++l) {
      if (cache.masks[l].size() != masks->keep[l].size() || cache.masks[l] != masks->keep[l]) {
        throw ConsistencyError("backward masks differ from the forward masks at layer " +
                               std::to_string(l + 1));
      }
    }
  }
}

}  // namespace

std::vector<int> DenseNetwork::widths() const {
  std::vector<int> w;
  if (weights.empty()) return w;
  w.push_back(static_cast<int>(weights.front().cols()));
  for (const auto& W : weights) w.push_back(static_cast<int>(W.rows()));
  return w;
}

Eigen::Index DenseNetwork::parameter_count() const {
  Eigen::Index count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) count += weights[l].size() + biases[l].size();
  return count;
}

GradientSet GradientSet::zeros_like(const DenseNetwork& net) {
  GradientSet g;
  for (int l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

DenseNetwork zero_network(std::span<const int> widths) {
  if (widths.size() < 2) throw ShapeError("a network needs at least input and output widths");
  if (static_cast<int>(widths.size()) - 1 > kMaxLayers) {
    throw ShapeError("at most " + std::to_string(kMaxLayers) + " layers are supported");
  }
  DenseNetwork net;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l - 1] < 1) throw ShapeError("layer widths must be positive");
    net.weights.push_back(Eigen::MatrixXd::Zero(widths[l], widths[l - 1]));
    net.biases.push_back(Eigen::VectorXd::Zero(widths[l]));
  }
  return net;
}

DenseNetwork make_network(std::span<const int> widths, Rng& rng) {
  DenseNetwork net = zero_network(widths);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& W : net.weights) {
    const double sd = std::sqrt(2.0 / static_cast<double>(W.cols()));
    // Row-major fill keeps the draw order independent of Eigen's storage.
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = sd * normal(rng);
  }
  return net;
}

void validate(const DenseNetwork& net) {
  const int L = net.num_layers();
  if (L < 1) throw ShapeError("network has no layers");
  if (L > kMaxLayers) throw ShapeError("network has " + std::to_string(L) + " layers, at most " +
                                       std::to_string(kMaxLayers) + " allowed");
  if (net.biases.size() != net.weights.size()) throw ShapeError("weight/bias layer count mismatch");
  for (int l = 0; l < L; ++l) {
    const auto& W = net.weights[l];
    if (W.rows() < 1 || W.cols() < 1) throw ShapeError("empty weight matrix at layer " + std::to_string(l + 1));
    if (net.biases[l].size() != W.rows()) {
      throw ShapeError("bias at layer " + std::to_string(l + 1) + " has " +
                       std::to_string(net.biases[l].size()) + " entries, expected " +
                       std::to_string(W.rows()));
    }
    if (l > 0 && W.cols() != net.weights[l - 1].rows()) {
      throw ShapeError("weight at layer " + std::to_string(l + 1) + " is " + dims(W.rows(), W.cols()) +
                       ", previous layer width is " + std::to_string(net.weights[l - 1].rows()));
    }
    if (!W.allFinite() || !net.biases[l].allFinite()) {
      throw NumericError("non-finite parameter at layer " + std::to_string(l + 1));
    }
  }
}

void check_masks(const DenseNetwork& net, const DropoutMaskSet& masks) {
  const int L = net.num_layers();
  if (static_cast<int>(masks.keep.size()) != L - 1) {
    throw ShapeError("mask set has " + std::to_string(masks.keep.size()) +
                     " layers, network has " + std::to_string(L - 1) + " hidden layers");
  }
  for (int l = 0; l + 1 < L; ++l) {
    const auto& z = masks.keep[l];
    if (z.size() != net.weights[l].rows()) {
      throw ShapeError("mask at hidden layer " + std::to_string(l + 1) + " has " +
                       std::to_string(z.size()) + " entries, expected " +
                       std::to_string(net.weights[l].rows()));
    }
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      if (z[k] != 0.0 && z[k] != 1.0) throw ShapeError("mask entries must be 0 or 1");
    }
  }
}

Eigen::MatrixXd forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& inputs,
                              const DropoutMaskSet* masks, ForwardCache* cache) {
  validate(net);
  if (inputs.rows() != net.input_dim()) {
    throw ShapeError("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                     std::to_string(net.input_dim()));
  }
  if (!inputs.allFinite()) throw NumericError("non-finite network input");
  if (masks) check_masks(net, *masks);

  const int L = net.num_layers();
  if (cache) {
    cache->activations.assign(1, inputs);
    cache->preactivations.clear();
    cache->masks = masks ? masks->keep : std::vector<Eigen::VectorXd>{};
  }

  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd pre = net.weights[l] * a;
    pre.colwise() += net.biases[l];
    if (l + 1 == L) {
      if (cache) cache->preactivations.push_back(pre);
      return pre;
    }
    a = pre.cwiseMax(0.0);
    if (masks) a.array().colwise() *= masks->keep[l].array();
    if (cache) {
      cache->preactivations.push_back(std::move(pre));
      cache->activations.push_back(a);
    }
  }
  return a;  // unreachable: L >= 1
}

ForwardResult forward(const DenseNetwork& net, const Eigen::VectorXd& input,
                      const DropoutMaskSet* masks) {
  ForwardResult result;
  Eigen::MatrixXd out = forward_batch(net, input, masks, &result.cache);
  result.output = out.col(0);
  return result;
}

GradientSet backward(const DenseNetwork& net, const ForwardCache& cache,
                     const Eigen::MatrixXd& output_grad, const DropoutMaskSet* masks) {
  check_cache(net, cache, masks);
  const int L = net.num_layers();
  const Eigen::Index batch = cache.activations.front().cols();
  if (output_grad.rows() != net.output_dim() || output_grad.cols() != batch) {
    throw ShapeError("output gradient is " + dims(output_grad.rows(), output_grad.cols()) +
                     ", expected " + dims(net.output_dim(), batch));
  }
  if (!output_grad.allFinite()) throw NumericError("non-finite output gradient");

  GradientSet g;
  g.weights.resize(L);
  g.biases.resize(L);
  Eigen::MatrixXd delta = output_grad;  // identity output activation
  for (int l = L - 1; l >= 0; --l) {
    g.weights[l].noalias() = delta * cache.activations[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = net.weights[l].transpose() * delta;
    // relu'(pre) is 0 at the kink, and masked units pass nothing back.
    upstream.array() *= (cache.preactivations[l - 1].array() > 0.0).cast<double>();
    if (masks) upstream.array().colwise() *= masks->keep[l - 1].array();
    delta = std::move(upstream);
  }
  return g;
}

DenseNetwork apply_mask_to_params(const DenseNetwork& net, const DropoutMaskSet& masks) {
  validate(net);
  check_masks(net, masks);
  DenseNetwork out = net;
  for (int l = 0; l + 1 < net.num_layers(); ++l) {
    out.weights[l].array().colwise() *= masks.keep[l].array();
    out.biases[l].array() *= masks.keep[l].array();
  }
  return out;
}

DropoutMaskSet sample_masks(const DenseNetwork& net, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw DomainError("keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
  }
  std::bernoulli_distribution keep(keep_prob);
  DropoutMaskSet m;
  for (int l = 0; l + 1 < net.num_layers(); ++l) {
    Eigen::VectorXd z(net.weights[l].rows());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = keep(rng) ? 1.0 : 0.0;
    m.keep.push_back(std::move(z));
  }
  return m;
}

DropoutMaskSet all_ones_masks(const DenseNetwork& net) {
  DropoutMaskSet m;
  for (int l = 0; l + 1 < net.num_layers(); ++l) {
    m.keep.push_back(Eigen::VectorXd::Ones(net.weights[l].rows()));
  }
  return m;
}

DenseNetwork mean_field(const DenseNetwork& net, double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw DomainError("keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
  }
  DenseNetwork out = net;
  if (keep_prob == 1.0) return out;
  for (int l = 1; l < out.num_layers(); ++l) out.weights[l] *= keep_prob;
  return out;
}

Eigen::VectorXd flatten(const GradientSet& grads) {
  Eigen::Index count = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) count += grads.weights[l].size() + grads.biases[l].size();
  Eigen::VectorXd out(count);
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    const auto& W = grads.weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) out[pos++] = W(r, c);
    out.segment(pos, grads.biases[l].size()) = grads.biases[l];
    pos += grads.biases[l].size();
  }
  return out;
}

Eigen::VectorXd flatten(const DenseNetwork& net) {
  GradientSet view{net.weights, net.biases};
  return flatten(view);
}

void unflatten(std::span<const double> params, DenseNetwork& net) {
  if (static_cast<Eigen::Index>(params.size()) != net.parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, network has " +
                     std::to_string(net.parameter_count()));
  }
  std::size_t pos = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    auto& W = net.weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = params[pos++];
    for (Eigen::Index k = 0; k < net.biases[l].size(); ++k) net.biases[l][k] = params[pos++];
  }
}

double weight_sq_norm(const DenseNetwork& net) {
  double s = 0.0;
  for (const auto& W : net.weights) s += W.squaredNorm();
  return s;
}

double bias_sq_norm(const DenseNetwork& net) {
  double s = 0.0;
  for (const auto& b : net.biases) s += b.squaredNorm();
  return s;
}

}  // namespace dnc::nn
