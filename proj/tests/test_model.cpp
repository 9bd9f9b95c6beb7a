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

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dnc/errors.hpp"
#include "dnc/model.hpp"
#include "test_util.hpp"

using namespace dnc;

namespace {

// Network R^2 -> R returning the constant c.
nn::DenseNetwork constant_net(double c) {
  nn::DenseNetwork net = nn::zero_network(std::vector<int>{2, 3, 1});
  net.biases[1][0] = c;
  return net;
}

DncModel constant_model(int J, int p, const std::vector<double>& h, const std::vector<double>& psi) {
  DncModel m;
  m.num_outcomes = J;
  m.num_covariates = p;
  for (double c : h) m.factor_nets.push_back(constant_net(c));
  for (double c : psi) m.loading_nets.push_back(constant_net(c));
  m.beta = Eigen::VectorXd::Zero(p);
  return m;
}

double ref_scalar(const nn::DenseNetwork& net, const Eigen::Vector2d& s, const nn::DropoutMaskSet* m = nullptr) {
  return testutil::ref_forward(net, {s[0], s[1]}, m)[0];
}

// Independent matrix-arithmetic oracle for X beta + Psi h.
Eigen::VectorXd oracle_mean(const DncModel& m, const Eigen::Vector2d& s, const Eigen::MatrixXd& X,
                            const ModelMasks* masks) {
  const int J = m.num_outcomes;
  Eigen::VectorXd h(J);
  for (int j = 0; j < J; ++j) h[j] = ref_scalar(m.factor_nets[j], s, masks ? &masks->factor[j] : nullptr);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(J, J);
  int o = 0;
  for (int r = 0; r < J; ++r)
    for (int c = r; c < J; ++c, ++o) psi(r, c) = ref_scalar(m.loading_nets[o], s, masks ? &masks->loading[o] : nullptr);
  Eigen::VectorXd y = X * m.beta;
  for (int r = 0; r < J; ++r)
    for (int c = 0; c < J; ++c) y[r] += psi(r, c) * h[c];
  return y;
}

}  // namespace

TEST_SUITE("dnc_model") {

TEST_CASE("constant factor networks give constant h") {
  const DncModel m = constant_model(3, 1, {1.5, -2.0, 0.25}, {0, 0, 0, 0, 0, 0});
  for (const Eigen::Vector2d& s : {Eigen::Vector2d(0.1, 0.9), Eigen::Vector2d(0.7, 0.2)}) {
    const Eigen::VectorXd h = eval_factors(m, s);
    CHECK(h[0] == 1.5);
    CHECK(h[1] == -2.0);
    CHECK(h[2] == 0.25);
  }
}

TEST_CASE("eval_factors matches hand evaluation and is mask-neutral under all-ones") {
  DncModel m = constant_model(2, 1, {0, 0}, {0, 0, 0});
  // h_1(s) = relu(s1 + s2) - relu(s1 - s2) + 0.5, h_2(s) = 2 relu(s1) + relu(-s2)
  m.factor_nets[0] = nn::zero_network(std::vector<int>{2, 2, 1});
  m.factor_nets[0].weights[0] << 1, 1, 1, -1;
  m.factor_nets[0].weights[1] << 1, -1;
  m.factor_nets[0].biases[1] << 0.5;
  m.factor_nets[1] = nn::zero_network(std::vector<int>{2, 2, 1});
  m.factor_nets[1].weights[0] << 1, 0, 0, -1;
  m.factor_nets[1].weights[1] << 2, 1;
  const Eigen::Vector2d s(0.5, 0.5);
  const Eigen::VectorXd h = eval_factors(m, s);
  CHECK(h[0] == doctest::Approx(1.0 - 0.0 + 0.5));
  CHECK(h[1] == doctest::Approx(1.0));
  const ModelMasks ones = all_ones_masks(m);
  CHECK(eval_factors(m, s, &ones) == h);
}

TEST_CASE("assemble_loading fills the upper triangle row-major") {
  const DncModel m2 = constant_model(2, 1, {1, 1}, {3.0, 5.0, 7.0});
  const Eigen::MatrixXd psi = assemble_loading(m2, Eigen::Vector2d(0.3, 0.3));
  CHECK(psi(0, 0) == 3.0);
  CHECK(psi(0, 1) == 5.0);
  CHECK(psi(1, 0) == 0.0);
  CHECK(psi(1, 1) == 7.0);

  const DncModel m3 = constant_model(3, 1, {1, 1, 1}, {1, 2, 3, 4, 5, 6});
  CHECK(m3.num_loadings() == 6);
  const Eigen::MatrixXd p3 = assemble_loading(m3, Eigen::Vector2d(0.5, 0.5));
  const std::vector<std::pair<int, int>> order{{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
  for (int o = 0; o < 6; ++o) {
    CHECK(p3(order[o].first, order[o].second) == o + 1);
    CHECK(loading_index(order[o].first, order[o].second, 3) == o);
    CHECK(loading_position(o, 3) == order[o]);
  }
  CHECK(p3(1, 0) == 0.0);
  CHECK(p3(2, 0) == 0.0);
  CHECK(p3(2, 1) == 0.0);

  const DncModel single = constant_model(2, 1, {1, 1}, {1.0, 0.0, 0.0});
  const Eigen::MatrixXd ps = assemble_loading(single, Eigen::Vector2d(0.9, 0.1));
  CHECK(ps(0, 0) == 1.0);
  CHECK(ps.cwiseAbs().sum() == 1.0);
}

TEST_CASE("lower triangle of Psi is zero under every mask") {
  std::mt19937_64 rng(3);
  DncModel m = testutil::random_model(3, 2, {6, 6}, rng);
  Rng mr(4);
  for (int t = 0; t < 30; ++t) {
    const ModelMasks masks = sample_model_masks(m, mr);
    const Eigen::MatrixXd psi = assemble_loading(m, Eigen::Vector2d::Random(), &masks);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < r; ++c) CHECK(psi(r, c) == 0.0);
  }
}

TEST_CASE("predict_mean examples") {
  DncModel a = constant_model(2, 2, {1, 1}, {1, 0, 1});
  CHECK(predict_mean(a, Eigen::Vector2d(0.2, 0.8), Eigen::Matrix2d::Random()) == Eigen::Vector2d(1, 1));
  DncModel b = constant_model(2, 2, {0, 0}, {0, 0, 0});
  b.beta = Eigen::Vector2d(1, 1);
  CHECK(predict_mean(b, Eigen::Vector2d(0.2, 0.8), Eigen::Matrix2d::Identity()) == Eigen::Vector2d(1, 1));
  CHECK_THROWS_AS(predict_mean(b, Eigen::Vector2d(0.2, 0.8), Eigen::MatrixXd::Identity(3, 2)), ShapeError);
}

TEST_CASE("predict_mean agrees with the arithmetic oracle at 20 random points") {
  std::mt19937_64 rng(12);
  const DncModel m = testutil::random_model(2, 3, {5, 4}, rng);
  Rng mr(13);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector2d s = 0.5 * (Eigen::Vector2d::Random() + Eigen::Vector2d::Ones());
    const Eigen::MatrixXd X = Eigen::MatrixXd::Random(2, 3);
    const ModelMasks masks = sample_model_masks(m, mr);
    const ModelMasks* use = (t % 2) ? &masks : nullptr;
    const Eigen::VectorXd got = predict_mean(m, s, X, use);
    const Eigen::VectorXd want = oracle_mean(m, s, X, use);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss examples") {
  SpatialDataset one;
  one.locations = Eigen::RowVector2d(0.5, 0.5);
  one.design = Eigen::MatrixXd::Zero(2, 1);
  one.outcomes = Eigen::RowVector2d(1.0, 1.0);

  DncModel perfect = constant_model(2, 1, {1, 1}, {1, 0, 1});
  perfect.lambda_w = perfect.lambda_b = 0.0;
  CHECK(loss(perfect, one) == 0.0);

  DncModel zero = constant_model(2, 1, {0, 0}, {0, 0, 0});
  zero.lambda_w = zero.lambda_b = 0.0;
  zero.sigma2 = 0.5;
  CHECK(loss(zero, one) == doctest::Approx(2.0).epsilon(1e-15));

  DncModel pen = constant_model(2, 1, {0, 0}, {0, 0, 0});
  pen.lambda_w = pen.lambda_b = 1e-4;
  pen.factor_nets[0].weights[0](1, 0) = 3.0;
  CHECK(penalty(pen) == doctest::Approx(9e-4).epsilon(1e-12));

  SpatialDataset empty = one;
  empty.locations.resize(0, 2);
  empty.design.resize(0, 1);
  empty.outcomes.resize(0, 2);
  CHECK_THROWS_AS(loss(zero, empty), DomainError);
}

TEST_CASE("loss is invariant to batch ordering and deterministic with all-ones masks") {
  std::mt19937_64 rng(5);
  const DncModel m = testutil::random_model(2, 2, {6}, rng);
  const SpatialDataset d = testutil::random_dataset(40, 2, 2, rng);
  std::vector<Eigen::Index> perm(40);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  CHECK(loss(m, subset(d, perm)) == doctest::Approx(loss(m, d)).epsilon(1e-13));
  const ModelMasks ones = all_ones_masks(m);
  CHECK(loss(m, d, &ones) == loss(m, d, &ones));
  CHECK(loss(m, d, &ones) == loss(m, d));
}

TEST_CASE("loss_and_gradient matches finite differences of loss") {
  std::mt19937_64 rng(77);
  DncModel m = testutil::random_model(2, 2, {4, 3}, rng, 0.8);
  m.lambda_w = 1e-2;
  m.lambda_b = 3e-3;
  const SpatialDataset d = testutil::random_dataset(7, 2, 2, rng);
  Rng mr(1);
  const ModelMasks masks = sample_model_masks(m, mr);
  ModelGradient grad;
  const double value = loss_and_gradient(m, d, &masks, grad);
  CHECK(value == doctest::Approx(loss(m, d, &masks)).epsilon(1e-13));

  double worst = 0.0;
  auto probe = [&](nn::DenseNetwork& net, const nn::GradientSet& g) {
    Eigen::VectorXd theta = nn::flatten(net);
    const Eigen::VectorXd an = nn::flatten(g);
    for (long k = 0; k < theta.size(); ++k) {
      const double keep = theta[k];
      const double h = 1e-6;
      theta[k] = keep + h;
      nn::unflatten(std::span<const double>(theta.data(), theta.size()), net);
      const double up = loss(m, d, &masks);
      theta[k] = keep - h;
      nn::unflatten(std::span<const double>(theta.data(), theta.size()), net);
      const double down = loss(m, d, &masks);
      theta[k] = keep;
      nn::unflatten(std::span<const double>(theta.data(), theta.size()), net);
      const double fd = (up - down) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(an[k]));
      worst = std::max(worst, scale < 1e-7 ? std::abs(fd - an[k]) : std::abs(fd - an[k]) / scale);
    }
  };
  for (int j = 0; j < 2; ++j) probe(m.factor_nets[j], grad.factor[j]);
  for (int o = 0; o < 3; ++o) probe(m.loading_nets[o], grad.loading[o]);
  CHECK(worst < 1e-4);
}

TEST_CASE("residual_matrix examples") {
  SpatialDataset one;
  one.locations = Eigen::RowVector2d(0.5, 0.5);
  one.design = Eigen::MatrixXd::Zero(2, 1);
  one.outcomes = Eigen::RowVector2d(2.0, 0.0);
  const DncModel m = constant_model(2, 1, {1, 1}, {1, 0, 1});
  const Eigen::MatrixXd r = residual_matrix(m, one);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(0, 1) == -1.0);
  one.outcomes = Eigen::RowVector2d(1.0, 1.0);
  CHECK(residual_matrix(m, one).isZero());

  std::mt19937_64 rng(9);
  const DncModel rm = testutil::random_model(2, 2, {5}, rng);
  const SpatialDataset d = testutil::random_dataset(50, 2, 2, rng);
  const Eigen::MatrixXd R = residual_matrix(rm, d);
  for (long i = 0; i < 50; ++i) {
    const Eigen::VectorXd want = d.outcomes.row(i).transpose() - oracle_mean(rm, d.locations.row(i).transpose(),
                                                                             d.design_at(i), nullptr);
    CHECK((R.row(i).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss and Monte Carlo ELBO differ by a constant at 20 random parameter settings") {
  // Scale factor: with lambda = keep_prob / (2 n) and the per-record mean of
  // the loss, n * L_DNN = -L_GPMC - (n J / 2) log(2 pi sigma2) where L_GPMC
  // uses the same fixed masks (one term per mask set) and the KL penalty
  // (keep_prob / 2) sum ||theta||^2 on the unmasked parameters.
  std::mt19937_64 rng(2718);
  const int n = 30, J = 2, p = 2, M = 3;
  const double keep = 0.7;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    DncModel m = testutil::random_model(J, p, {5, 4}, rng, 0.9);
    std::uniform_real_distribution<double> us(0.1, 2.0);
    m.sigma2 = us(rng);
    m.keep_prob_h = m.keep_prob_psi = keep;
    m.lambda_w = m.lambda_b = keep / (2.0 * n);
    const SpatialDataset d = testutil::random_dataset(n, J, p, rng);
    Rng mr(100 + t);
    std::vector<ModelMasks> masks;
    for (int k = 0; k < M; ++k) masks.push_back(sample_model_masks(m, mr));

    double lhs = 0.0;
    for (const auto& mk : masks) lhs += n * loss(m, d, &mk);
    lhs /= M;

    // Oracle: explicit Gaussian log-likelihood of masked parameters.
    double loglik = 0.0;
    for (const auto& mk : masks) {
      DncModel masked = m;
      for (int j = 0; j < J; ++j) masked.factor_nets[j] = nn::apply_mask_to_params(m.factor_nets[j], mk.factor[j]);
      for (int o = 0; o < 3; ++o) masked.loading_nets[o] = nn::apply_mask_to_params(m.loading_nets[o], mk.loading[o]);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd mu = oracle_mean(masked, d.locations.row(i).transpose(), d.design_at(i), nullptr);
        for (int j = 0; j < J; ++j) {
          const double r = d.outcomes(i, j) - mu[j];
          loglik += -0.5 * std::log(2.0 * std::numbers::pi * m.sigma2) - r * r / (2.0 * m.sigma2);
        }
      }
    }
    loglik /= M;
    double sq = 0.0;
    for (const auto& net : m.factor_nets) sq += nn::weight_sq_norm(net) + nn::bias_sq_norm(net);
    for (const auto& net : m.loading_nets) sq += nn::weight_sq_norm(net) + nn::bias_sq_norm(net);
    const double elbo = loglik - 0.5 * keep * sq;
    const double rhs = -elbo - 0.5 * n * J * std::log(2.0 * std::numbers::pi * m.sigma2);
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("dataset helpers") {
  Eigen::MatrixXd cov(2, 2);
  cov << 1, 2, 3, 4;
  const Eigen::MatrixXd shared = build_design(cov, 2, DesignLayout::shared);
  CHECK(shared.rows() == 4);
  CHECK(shared.row(0) == shared.row(1));
  CHECK(shared.row(2) == Eigen::RowVector2d(3, 4));
  const Eigen::MatrixXd per = build_design(cov, 2, DesignLayout::per_outcome);
  Eigen::MatrixXd want(4, 2);
  want << 1, 0, 0, 2, 3, 0, 0, 4;
  CHECK(per == want);
  CHECK_THROWS(build_design(Eigen::MatrixXd::Ones(2, 3), 2, DesignLayout::per_outcome));

  std::mt19937_64 rng(1);
  SpatialDataset d = testutil::random_dataset(5, 2, 2, rng);
  const std::vector<Eigen::Index> rows{3, 1};
  const SpatialDataset s = subset(d, rows);
  CHECK(s.size() == 2);
  CHECK(s.outcomes.row(0) == d.outcomes.row(3));
  CHECK(s.design_at(1) == d.design_at(1));
  d.outcomes(2, 1) = std::nan("");
  CHECK_THROWS_AS(validate(d), NumericError);
}

TEST_CASE("model validation and initialization") {
  ModelSettings st;
  const DncModel m = init_model(2, 3, st, 42);
  CHECK(m.factor_nets.size() == 2);
  CHECK(m.loading_nets.size() == 3);
  CHECK(m.factor_nets[0].widths() == std::vector<int>{2, 64, 64, 1});
  CHECK(m.beta.isZero());
  CHECK(m.sigma2 == 1.0);
  const DncModel again = init_model(2, 3, st, 42);
  CHECK(nn::flatten(again.loading_nets[2]) == nn::flatten(m.loading_nets[2]));

  DncModel bad = m;
  bad.sigma2 = 0.0;
  CHECK_THROWS(validate(bad));
  bad = m;
  bad.keep_prob_h = 0.0;
  CHECK_THROWS(validate(bad));
  bad = m;
  bad.loading_nets.pop_back();
  CHECK_THROWS(validate(bad));
}

}  // TEST_SUITE
