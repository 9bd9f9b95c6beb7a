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

#include "dnc/metrics.hpp"

#include <cmath>
#include <string>

#include "dnc/errors.hpp"

namespace dnc {

double rmspe(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
  if (truth.size() != pred.size()) {
    throw ShapeError("rmspe: truth has " + std::to_string(truth.size()) + " entries, prediction " +
                     std::to_string(pred.size()));
  }
  if (truth.size() == 0) throw DomainError("rmspe needs at least one value");
  return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

IntervalScore coverage_and_length(const Eigen::VectorXd& truth, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper) {
  if (truth.size() != lower.size() || truth.size() != upper.size()) {
    throw ShapeError("coverage: truth and bounds differ in length");
  }
  if (truth.size() == 0) throw DomainError("coverage needs at least one value");
  long inside = 0;
  double length = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (lower[i] > upper[i]) {
      throw DomainError("interval " + std::to_string(i + 1) + " has lower bound above upper bound");
    }
    if (lower[i] <= truth[i] && truth[i] <= upper[i]) ++inside;
    length += upper[i] - lower[i];
  }
  const double n = static_cast<double>(truth.size());
  return {static_cast<double>(inside) / n, length / n};
}

MetricsReport evaluate_predictions(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& mean,
                                   const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper) {
  if (truth.rows() != mean.rows() || truth.rows() != lower.rows() || truth.rows() != upper.rows()) {
    throw ShapeError("prediction has " + std::to_string(mean.rows()) + " rows, truth has " +
                     std::to_string(truth.rows()));
  }
  if (truth.cols() != mean.cols() || truth.cols() != lower.cols() || truth.cols() != upper.cols()) {
    throw ShapeError("prediction and truth differ in outcome count");
  }
  MetricsReport report;
  report.n_test = static_cast<long>(truth.rows());
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const IntervalScore s = coverage_and_length(truth.col(j), lower.col(j), upper.col(j));
    report.outcomes.push_back({rmspe(truth.col(j), mean.col(j)), s.coverage, s.mean_length});
  }
  return report;
}

}  // namespace dnc
