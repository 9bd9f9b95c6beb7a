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

#ifndef DNC_METRICS_HPP
#define DNC_METRICS_HPP

#include <vector>

#include <Eigen/Dense>

namespace dnc {

/// sqrt(mean((truth - pred)^2)).
double rmspe(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred);

struct IntervalScore {
  double coverage = 0.0;     // fraction of lower <= truth <= upper
  double mean_length = 0.0;  // mean(upper - lower)
};

/// Throws DomainError when any lower bound exceeds its upper bound.
IntervalScore coverage_and_length(const Eigen::VectorXd& truth, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper);

struct OutcomeMetrics {
  double rmspe = 0.0;
  double coverage = 0.0;
  double mean_length = 0.0;
};

struct MetricsReport {
  std::vector<OutcomeMetrics> outcomes;
  double fit_seconds = 0.0;
  long n_test = 0;
};

/// Per-outcome metrics from n x J truth, means and bounds.
MetricsReport evaluate_predictions(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& mean,
                                   const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper);

}  // namespace dnc

#endif  // DNC_METRICS_HPP
