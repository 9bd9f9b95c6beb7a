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

#include "dnc/geosim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dnc/errors.hpp"
#include "dnc/posterior.hpp"

namespace dnc {

namespace {

Eigen::MatrixXd uniform_locations(long n, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd s(n, 2);
  for (long i = 0; i < n; ++i) {
    s(i, 0) = unif(rng);
    s(i, 1) = unif(rng);
  }
  return s;
}

Eigen::MatrixXd standard_normal(long rows, long cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) x(i, j) = normal(rng);
  return x;
}

SplitSizes resolve_split(long n, const std::optional<SplitSizes>& split) {
  if (n < 3) throw DomainError("simulation needs at least 3 locations");
  const SplitSizes s = split.value_or(default_split(n));
  if (s.train < 1 || s.val < 1 || s.test < 1) throw DomainError("every split needs at least one location");
  if (s.train + s.val + s.test != n) {
    throw DomainError("split sizes " + std::to_string(s.train) + "/" + std::to_string(s.val) + "/" +
                      std::to_string(s.test) + " do not sum to n = " + std::to_string(n));
  }
  return s;
}

// Assembles y = X beta + Psi h + eps, true correlations and the random split.
void finish(SimOutput& out, const Eigen::MatrixXd& locations, const Eigen::MatrixXd& covariates,
            const Eigen::VectorXd& beta, double noise_var, const SplitSizes& split, Rng& rng) {
  const long n = static_cast<long>(locations.rows());
  const int J = static_cast<int>(out.truth.h.cols());
  SimTruth& t = out.truth;

  t.w = Eigen::MatrixXd::Zero(n, J);
  for (long i = 0; i < n; ++i) {
    int o = 0;
    for (int r = 0; r < J; ++r)
      for (int c = r; c < J; ++c, ++o) t.w(i, r) += t.psi(i, o) * t.h(i, c);
  }
  t.eps = std::sqrt(noise_var) * standard_normal(n, J, rng);

  out.covariates = covariates;
  out.all.locations = locations;
  out.all.design = build_design(covariates, J, out.layout);
  const Eigen::VectorXd xb = out.all.design * beta;
  out.all.outcomes = Eigen::Map<const Eigen::MatrixXd>(xb.data(), J, n).transpose() + t.w + t.eps;

  const Eigen::MatrixXd factor_cov = Eigen::MatrixXd::Identity(J, J);
  t.rho.resize(n, J * (J - 1) / 2);
  for (long i = 0; i < n; ++i) {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(J, J);
    int o = 0;
    for (int r = 0; r < J; ++r)
      for (int c = r; c < J; ++c) psi(r, c) = t.psi(i, o++);
    const Eigen::MatrixXd rho = true_cross_correlation(psi, factor_cov, noise_var);
    int k = 0;
    for (int r = 0; r < J; ++r)
      for (int c = r + 1; c < J; ++c) t.rho(i, k++) = rho(r, c);
  }

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  out.train_idx.assign(perm.begin(), perm.begin() + split.train);
  out.val_idx.assign(perm.begin() + split.train, perm.begin() + split.train + split.val);
  out.test_idx.assign(perm.begin() + split.train + split.val, perm.end());
  out.train = subset(out.all, out.train_idx);
  out.val = subset(out.all, out.val_idx);
  out.test = subset(out.all, out.test_idx);
}

}  // namespace

void validate(const Kernel& k) {
  if (!(k.variance > 0.0) || !std::isfinite(k.variance)) throw DomainError("kernel variance must be positive");
  if (!(k.length_scale > 0.0) || !std::isfinite(k.length_scale)) {
    throw DomainError("kernel length scale must be positive");
  }
}

double kernel_eval(const Kernel& k, double distance) {
  const double d = distance / k.length_scale;
  switch (k.family) {
    case KernelFamily::exponential:
      return k.variance * std::exp(-d);
    case KernelFamily::matern32: {
      const double a = std::sqrt(3.0) * d;
      return k.variance * (1.0 + a) * std::exp(-a);
    }
  }
  return 0.0;
}

double kernel_eval(const Kernel& k, const Eigen::VectorXd& s, const Eigen::VectorXd& t) {
  if (s.size() != t.size()) throw ShapeError("kernel arguments differ in dimension");
  return kernel_eval(k, (s - t).norm());
}

Eigen::MatrixXd gram_matrix(const Kernel& k, const Eigen::MatrixXd& points) {
  validate(k);
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = k.variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = kernel_eval(k, (points.row(i) - points.row(j)).norm());
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

GpSampler::GpSampler(const Kernel& k, const Eigen::MatrixXd& points, double jitter) {
  if (points.rows() < 1) throw DomainError("GP sampling needs at least one location");
  if (!(jitter > 0.0)) throw DomainError("jitter must be positive");
  Eigen::MatrixXd K = gram_matrix(k, points);
  for (double eps = jitter; eps <= kMaxJitter * (1.0 + 1e-12); eps *= 2.0) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) {
      lower_ = llt.matrixL();
      jitter_ = eps;
      return;
    }
  }
  throw NotPsdError("kernel Gram matrix is not positive definite even with jitter " +
                    std::to_string(kMaxJitter));
}

Eigen::VectorXd GpSampler::sample(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(lower_.rows());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
  return lower_.triangularView<Eigen::Lower>() * xi;
}

Eigen::VectorXd gp_sample(const Kernel& k, const Eigen::MatrixXd& points, double jitter, Rng& rng) {
  return GpSampler(k, points, jitter).sample(rng);
}

SplitSizes default_split(long n) {
  SplitSizes s;
  s.train = (n * 3) / 5;
  s.val = n / 5;
  s.test = n - s.train - s.val;
  return s;
}

SimOutput simulate_stationary(const StationaryParams& params) {
  const SplitSizes split = resolve_split(params.n, params.split);
  if (!(params.sigma2 > 0.0)) throw DomainError("noise variance must be positive");
  Rng rng(params.seed);
  const long n = params.n;

  SimOutput out;
  out.design = "stationary";
  out.layout = DesignLayout::per_outcome;
  out.params = {{"n", static_cast<double>(n)},
                {"n_train", static_cast<double>(split.train)},
                {"n_val", static_cast<double>(split.val)},
                {"n_test", static_cast<double>(split.test)},
                {"phi", params.phi},
                {"beta1", params.beta[0]},
                {"beta2", params.beta[1]},
                {"sigma2", params.sigma2},
                {"seed", static_cast<double>(params.seed)}};

  const Eigen::MatrixXd s = uniform_locations(n, rng);
  const GpSampler gp(Kernel{KernelFamily::exponential, 1.0, params.phi}, s);
  out.truth.h.resize(n, 2);
  out.truth.h.col(0) = gp.sample(rng);
  out.truth.h.col(1) = gp.sample(rng);
  const Eigen::VectorXd eta11 = gp.sample(rng);
  const Eigen::VectorXd eta22 = gp.sample(rng);
  const Eigen::VectorXd eta12 = gp.sample(rng);
  out.truth.psi.resize(n, 3);
  out.truth.psi.col(0) = (1.0 + eta11.array()).matrix();
  out.truth.psi.col(1) = eta12;
  out.truth.psi.col(2) = (1.0 + eta22.array()).matrix();

  const Eigen::MatrixXd x = standard_normal(n, 2, rng);
  finish(out, s, x, params.beta, params.sigma2, split, rng);
  return out;
}

SimOutput simulate_deepgp(const DeepGpParams& params) {
  const SplitSizes split = resolve_split(params.n, params.split);
  if (!(params.noise_sd > 0.0)) throw DomainError("noise standard deviation must be positive");
  if (params.latent_dim < 1) throw DomainError("latent dimension must be at least 1");
  Rng rng(params.seed);
  const long n = params.n;

  SimOutput out;
  out.design = "deepgp";
  out.layout = DesignLayout::shared;
  out.params = {{"n", static_cast<double>(n)},
                {"n_train", static_cast<double>(split.train)},
                {"n_val", static_cast<double>(split.val)},
                {"n_test", static_cast<double>(split.test)},
                {"phi_h", params.phi_h},
                {"phi_u", params.phi_u},
                {"phi_psi", params.phi_psi},
                {"latent_dim", static_cast<double>(params.latent_dim)},
                {"beta", params.beta},
                {"noise_sd", params.noise_sd},
                {"seed", static_cast<double>(params.seed)}};

  const Eigen::MatrixXd s = uniform_locations(n, rng);
  {
    const GpSampler gp_h(Kernel{KernelFamily::matern32, 1.0, params.phi_h}, s);
    out.truth.h.resize(n, 2);
    out.truth.h.col(0) = gp_h.sample(rng);
    out.truth.h.col(1) = gp_h.sample(rng);
  }
  Eigen::MatrixXd u(n, params.latent_dim);
  {
    const GpSampler gp_u(Kernel{KernelFamily::matern32, 1.0, params.phi_u}, s);
    for (int q = 0; q < params.latent_dim; ++q) u.col(q) = gp_u.sample(rng);
  }
  out.truth.latent = u;
  {
    const GpSampler gp_psi(Kernel{KernelFamily::matern32, 1.0, params.phi_psi}, u);
    out.truth.psi.resize(n, 3);
    for (int o = 0; o < 3; ++o) out.truth.psi.col(o) = gp_psi.sample(rng);
  }

  const Eigen::MatrixXd x = standard_normal(n, 1, rng);
  finish(out, s, x, Eigen::VectorXd::Constant(1, params.beta), params.noise_sd * params.noise_sd, split, rng);
  return out;
}

}  // namespace dnc
