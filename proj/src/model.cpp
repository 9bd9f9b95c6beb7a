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

#include "dnc/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dnc/errors.hpp"

namespace dnc {

namespace {

// Rows evaluated per network call; bounds the size of hidden activations.
constexpr Eigen::Index kEvalChunk = 4096;

struct Outputs {
  Eigen::MatrixXd h;    // J x B
  Eigen::MatrixXd psi;  // O x B
};

const nn::DropoutMaskSet* factor_mask(const ModelMasks* masks, int j) {
  return masks ? &masks->factor[j] : nullptr;
}

const nn::DropoutMaskSet* loading_mask(const ModelMasks* masks, int o) {
  return masks ? &masks->loading[o] : nullptr;
}

void check_model_masks(const DncModel& model, const ModelMasks* masks) {
  if (!masks) return;
  if (static_cast<int>(masks->factor.size()) != model.num_outcomes ||
      static_cast<int>(masks->loading.size()) != model.num_loadings()) {
    throw ShapeError("model masks must hold one set per factor and loading network");
  }
}

// inputs: 2 x B
Outputs evaluate(const DncModel& model, const Eigen::MatrixXd& inputs, const ModelMasks* masks,
                 std::vector<nn::ForwardCache>* factor_caches = nullptr,
                 std::vector<nn::ForwardCache>* loading_caches = nullptr) {
  check_model_masks(model, masks);
  const int J = model.num_outcomes;
  const int O = model.num_loadings();
  Outputs out{Eigen::MatrixXd(J, inputs.cols()), Eigen::MatrixXd(O, inputs.cols())};
  if (factor_caches) factor_caches->resize(J);
  if (loading_caches) loading_caches->resize(O);
  for (int j = 0; j < J; ++j) {
    out.h.row(j) = nn::forward_batch(model.factor_nets[j], inputs, factor_mask(masks, j),
                                     factor_caches ? &(*factor_caches)[j] : nullptr);
  }
  for (int o = 0; o < O; ++o) {
    out.psi.row(o) = nn::forward_batch(model.loading_nets[o], inputs, loading_mask(masks, o),
                                       loading_caches ? &(*loading_caches)[o] : nullptr);
  }
  return out;
}

// w = Psi h for every column; returns J x B.
Eigen::MatrixXd combine(const Outputs& out, int J) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(J, out.h.cols());
  int o = 0;
  for (int r = 0; r < J; ++r) {
    for (int c = r; c < J; ++c, ++o) {
      w.row(r).array() += out.psi.row(o).array() * out.h.row(c).array();
    }
  }
  return w;
}

void check_locations(const Eigen::MatrixXd& locations) {
  if (locations.cols() != 2) {
    throw ShapeError("locations must have 2 columns, got " + std::to_string(locations.cols()));
  }
}

}  // namespace

void validate(const SpatialDataset& data) {
  const Eigen::Index n = data.size();
  if (n == 0) throw DomainError("dataset is empty");
  check_locations(data.locations);
  const int J = data.num_outcomes();
  if (J < 1) throw ShapeError("dataset has no outcomes");
  if (data.outcomes.rows() != n) throw ShapeError("outcome rows differ from location rows");
  if (data.design.rows() != n * J) {
    throw ShapeError("design has " + std::to_string(data.design.rows()) + " rows, expected n*J = " +
                     std::to_string(n * J));
  }
  if (!data.locations.allFinite() || !data.design.allFinite() || !data.outcomes.allFinite()) {
    throw NumericError("dataset contains non-finite values");
  }
}

SpatialDataset subset(const SpatialDataset& data, std::span<const Eigen::Index> rows) {
  const Eigen::Index J = data.outcomes.cols();
  SpatialDataset out;
  out.locations.resize(static_cast<Eigen::Index>(rows.size()), data.locations.cols());
  out.outcomes.resize(static_cast<Eigen::Index>(rows.size()), J);
  out.design.resize(static_cast<Eigen::Index>(rows.size()) * J, data.design.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Eigen::Index i = rows[k];
    if (i < 0 || i >= data.size()) throw ShapeError("subset row index out of range");
    const auto dst = static_cast<Eigen::Index>(k);
    out.locations.row(dst) = data.locations.row(i);
    out.outcomes.row(dst) = data.outcomes.row(i);
    out.design.middleRows(dst * J, J) = data.design.middleRows(i * J, J);
  }
  return out;
}

Eigen::MatrixXd build_design(const Eigen::MatrixXd& covariates, int num_outcomes, DesignLayout layout) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index q = covariates.cols();
  if (num_outcomes < 1) throw ShapeError("need at least one outcome");
  const Eigen::Index J = num_outcomes;
  if (layout == DesignLayout::shared) {
    Eigen::MatrixXd X(n * J, q);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < J; ++j) X.row(i * J + j) = covariates.row(i);
    return X;
  }
  if (q % J != 0) {
    throw ShapeError("per-outcome layout needs a covariate count divisible by J (" + std::to_string(q) +
                     " covariates, J = " + std::to_string(J) + ")");
  }
  const Eigen::Index per = q / J;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n * J, q);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < J; ++j)
      X.block(i * J + j, j * per, 1, per) = covariates.block(i, j * per, 1, per);
  return X;
}

DncModel init_model(int num_outcomes, int num_covariates, const ModelSettings& settings,
                    std::uint64_t seed) {
  if (num_outcomes < 1) throw DomainError("model needs at least one outcome");
  if (num_covariates < 0) throw DomainError("covariate count must be non-negative");
  DncModel model;
  model.num_outcomes = num_outcomes;
  model.num_covariates = num_covariates;
  model.keep_prob_h = settings.keep_prob_h;
  model.keep_prob_psi = settings.keep_prob_psi;
  model.lambda_w = settings.lambda_w;
  model.lambda_b = settings.lambda_b;
  model.seed = seed;
  model.beta = Eigen::VectorXd::Zero(num_covariates);
  model.sigma2 = 1.0;

  auto widths = [](const std::vector<int>& hidden) {
    std::vector<int> w{2};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(1);
    return w;
  };
  const auto fw = widths(settings.arch.factor_hidden);
  const auto lw = widths(settings.arch.loading_hidden);
  Rng rng(seed);
  for (int j = 0; j < num_outcomes; ++j) model.factor_nets.push_back(nn::make_network(fw, rng));
  for (int o = 0; o < model.num_loadings(); ++o) model.loading_nets.push_back(nn::make_network(lw, rng));
  validate(model);
  return model;
}

void validate(const DncModel& model) {
  const int J = model.num_outcomes;
  if (J < 1) throw DomainError("model needs at least one outcome");
  if (static_cast<int>(model.factor_nets.size()) != J) {
    throw ShapeError("expected " + std::to_string(J) + " factor networks, got " +
                     std::to_string(model.factor_nets.size()));
  }
  if (static_cast<int>(model.loading_nets.size()) != model.num_loadings()) {
    throw ShapeError("expected " + std::to_string(model.num_loadings()) + " loading networks, got " +
                     std::to_string(model.loading_nets.size()));
  }
  auto check_net = [](const nn::DenseNetwork& net) {
    nn::validate(net);
    if (net.input_dim() != 2 || net.output_dim() != 1) {
      throw ShapeError("latent networks must map R^2 to R");
    }
  };
  for (const auto& net : model.factor_nets) check_net(net);
  for (const auto& net : model.loading_nets) check_net(net);
  if (model.beta.size() != model.num_covariates) throw ShapeError("beta length differs from p");
  if (!model.beta.allFinite()) throw NumericError("non-finite beta");
  if (!(model.sigma2 > 0.0) || !std::isfinite(model.sigma2)) throw DomainError("sigma2 must be positive");
  auto prob_ok = [](double p) { return p > 0.0 && p <= 1.0; };
  if (!prob_ok(model.keep_prob_h) || !prob_ok(model.keep_prob_psi)) {
    throw DomainError("keep probabilities must lie in (0, 1]");
  }
  if (!(model.lambda_w >= 0.0) || !(model.lambda_b >= 0.0)) throw DomainError("penalties must be non-negative");
}

int loading_index(int row, int col, int num_outcomes) {
  if (row < 0 || col < row || col >= num_outcomes) throw ShapeError("not an upper-triangular position");
  // Entries before row r: sum_{k<r} (J - k).
  return row * num_outcomes - row * (row - 1) / 2 + (col - row);
}

std::pair<int, int> loading_position(int index, int num_outcomes) {
  int o = index;
  for (int r = 0; r < num_outcomes; ++r) {
    const int len = num_outcomes - r;
    if (o < len) return {r, r + o};
    o -= len;
  }
  throw ShapeError("loading index out of range");
}

ModelMasks sample_model_masks(const DncModel& model, Rng& rng) {
  ModelMasks m;
  for (const auto& net : model.factor_nets) m.factor.push_back(nn::sample_masks(net, model.keep_prob_h, rng));
  for (const auto& net : model.loading_nets) m.loading.push_back(nn::sample_masks(net, model.keep_prob_psi, rng));
  return m;
}

ModelMasks all_ones_masks(const DncModel& model) {
  ModelMasks m;
  for (const auto& net : model.factor_nets) m.factor.push_back(nn::all_ones_masks(net));
  for (const auto& net : model.loading_nets) m.loading.push_back(nn::all_ones_masks(net));
  return m;
}

DncModel mean_field_model(const DncModel& model) {
  DncModel out = model;
  for (auto& net : out.factor_nets) net = nn::mean_field(net, model.keep_prob_h);
  for (auto& net : out.loading_nets) net = nn::mean_field(net, model.keep_prob_psi);
  out.keep_prob_h = 1.0;
  out.keep_prob_psi = 1.0;
  return out;
}

Eigen::VectorXd eval_factors(const DncModel& model, const Eigen::Vector2d& s, const ModelMasks* masks) {
  return evaluate(model, Eigen::MatrixXd(s), masks).h.col(0);
}

Eigen::MatrixXd assemble_loading(const DncModel& model, const Eigen::Vector2d& s, const ModelMasks* masks) {
  const Outputs out = evaluate(model, Eigen::MatrixXd(s), masks);
  const int J = model.num_outcomes;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(J, J);
  int o = 0;
  for (int r = 0; r < J; ++r)
    for (int c = r; c < J; ++c) psi(r, c) = out.psi(o++, 0);
  return psi;
}

Eigen::VectorXd predict_mean(const DncModel& model, const Eigen::Vector2d& s,
                             const Eigen::MatrixXd& design, const ModelMasks* masks) {
  if (design.rows() != model.num_outcomes || design.cols() != model.num_covariates) {
    throw ShapeError("design must be J x p");
  }
  const Outputs out = evaluate(model, Eigen::MatrixXd(s), masks);
  return design * model.beta + combine(out, model.num_outcomes).col(0);
}

Eigen::MatrixXd spatial_effects(const DncModel& model, const Eigen::MatrixXd& locations,
                                const ModelMasks* masks) {
  check_locations(locations);
  const Eigen::Index n = locations.rows();
  Eigen::MatrixXd w(n, model.num_outcomes);
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, n - start);
    const Eigen::MatrixXd inputs = locations.middleRows(start, len).transpose();
    w.middleRows(start, len) = combine(evaluate(model, inputs, masks), model.num_outcomes).transpose();
  }
  return w;
}

Eigen::MatrixXd predict_means(const DncModel& model, const SpatialDataset& data, const ModelMasks* masks) {
  if (data.num_outcomes() != model.num_outcomes || data.num_covariates() != model.num_covariates) {
    throw ShapeError("dataset J/p differ from the model");
  }
  Eigen::MatrixXd yhat = spatial_effects(model, data.locations, masks);
  const Eigen::VectorXd xb = data.design * model.beta;  // n J
  yhat += Eigen::Map<const Eigen::MatrixXd>(xb.data(), model.num_outcomes, data.size()).transpose();
  return yhat;
}

double penalty(const DncModel& model) {
  double w = 0.0, b = 0.0;
  for (const auto& net : model.factor_nets) {
    w += nn::weight_sq_norm(net);
    b += nn::bias_sq_norm(net);
  }
  for (const auto& net : model.loading_nets) {
    w += nn::weight_sq_norm(net);
    b += nn::bias_sq_norm(net);
  }
  return model.lambda_w * w + model.lambda_b * b;
}

double loss(const DncModel& model, const SpatialDataset& batch, const ModelMasks* masks) {
  if (batch.size() == 0) throw DomainError("loss needs a nonempty batch");
  const Eigen::MatrixXd r = batch.outcomes - predict_means(model, batch, masks);
  const double n = static_cast<double>(batch.size());
  return r.squaredNorm() / (2.0 * n * model.sigma2) + penalty(model);
}

double loss_and_gradient(const DncModel& model, const SpatialDataset& batch, const ModelMasks* masks,
                         ModelGradient& grad) {
  const Eigen::Index B = batch.size();
  if (B == 0) throw DomainError("loss needs a nonempty batch");
  if (batch.num_outcomes() != model.num_outcomes || batch.num_covariates() != model.num_covariates) {
    throw ShapeError("batch J/p differ from the model");
  }
  const int J = model.num_outcomes;
  const int O = model.num_loadings();

  std::vector<nn::ForwardCache> fcache, lcache;
  const Outputs out = evaluate(model, batch.locations.transpose(), masks, &fcache, &lcache);
  Eigen::MatrixXd yhat = combine(out, J);  // J x B
  const Eigen::VectorXd xb = batch.design * model.beta;
  yhat += Eigen::Map<const Eigen::MatrixXd>(xb.data(), J, B);
  const Eigen::MatrixXd resid = batch.outcomes.transpose() - yhat;  // J x B

  const double scale = 1.0 / (static_cast<double>(B) * model.sigma2);
  const double value = 0.5 * scale * resid.squaredNorm() + penalty(model);

  // dL/dyhat, then through w = Psi h.
  const Eigen::MatrixXd g = -scale * resid;
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(J, B);
  Eigen::MatrixXd dpsi(O, B);
  int o = 0;
  for (int r = 0; r < J; ++r) {
    for (int c = r; c < J; ++c, ++o) {
      dpsi.row(o) = g.row(r).cwiseProduct(out.h.row(c));
      dh.row(c) += g.row(r).cwiseProduct(out.psi.row(o));
    }
  }

  auto add_penalty = [&](const nn::DenseNetwork& net, nn::GradientSet& gs) {
    for (int l = 0; l < net.num_layers(); ++l) {
      gs.weights[l] += 2.0 * model.lambda_w * net.weights[l];
      gs.biases[l] += 2.0 * model.lambda_b * net.biases[l];
    }
  };
  grad.factor.resize(J);
  grad.loading.resize(O);
  for (int j = 0; j < J; ++j) {
    grad.factor[j] = nn::backward(model.factor_nets[j], fcache[j], dh.row(j), factor_mask(masks, j));
    add_penalty(model.factor_nets[j], grad.factor[j]);
  }
  for (int k = 0; k < O; ++k) {
    grad.loading[k] = nn::backward(model.loading_nets[k], lcache[k], dpsi.row(k), loading_mask(masks, k));
    add_penalty(model.loading_nets[k], grad.loading[k]);
  }
  return value;
}

Eigen::MatrixXd residual_matrix(const DncModel& model, const SpatialDataset& data) {
  validate(data);
  return data.outcomes - predict_means(model, data);
}

}  // namespace dnc
