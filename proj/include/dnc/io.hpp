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

// File formats.
//
// Dataset CSV     header s1,s2,x1..xp,y1..yJ; one location per row.
// Prediction CSV  header s1,s2, then mu_y<j>,lo<j>,hi<j> for j = 1..J, then
//                 rho_<j>_<k> for every j < k in row-major order.
// Truth CSV       split,s1,s2,h<j>..,psi_<j>_<k>..,w<j>..,eps<j>..,rho_<j>_<k>..
// Checkpoint      JSON document, see save_checkpoint().
// Metrics         JSON document keyed by 1-based outcome index.
//
// CSV numbers carry 17 significant digits; JSON numbers use the shortest text
// that reads back to the identical double.

#ifndef DNC_IO_HPP
#define DNC_IO_HPP

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dnc/geosim.hpp"
#include "dnc/metrics.hpp"
#include "dnc/model.hpp"
#include "dnc/posterior.hpp"
#include "dnc/trainer.hpp"

namespace dnc {

inline constexpr int kCheckpointVersion = 1;

/// Full round-trip text form of a double.
std::string format_double(double v);

std::string to_string(DesignLayout layout);
DesignLayout parse_layout(std::string_view name);

/// Per-coordinate min-max map of raw locations onto [0,1]^2.
struct Normalization {
  Eigen::Vector2d min = Eigen::Vector2d::Zero();
  Eigen::Vector2d max = Eigen::Vector2d::Ones();

  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& unit) const;
};

/// Bounds of the given locations; a constant coordinate maps to 0.
Normalization fit_normalization(const Eigen::MatrixXd& raw_locations);

/// Raw contents of a dataset CSV.
struct DatasetTable {
  Eigen::MatrixXd locations;   // n x 2, as stored
  Eigen::MatrixXd covariates;  // n x p
  Eigen::MatrixXd outcomes;    // n x J (J may be 0 for prediction inputs)
};

/// Strict parse: exact header order, numeric finite cells, consistent row
/// width. Errors name the file and line.
DatasetTable read_dataset_table(const std::string& path, bool require_outcomes = true);

struct LoadedDataset {
  SpatialDataset data;          // locations normalized
  Eigen::MatrixXd raw_locations;
  Normalization normalization;  // mapping that was applied
};

/// Loads a dataset, normalizing locations with `norm`, or with the file's own
/// bounds when `norm` is null.
LoadedDataset load_dataset(const std::string& path, DesignLayout layout,
                           const Normalization* norm = nullptr);

void save_dataset(const std::string& path, const Eigen::MatrixXd& locations,
                  const Eigen::MatrixXd& covariates, const Eigen::MatrixXd& outcomes);

struct Checkpoint {
  DncModel model;
  DesignLayout layout = DesignLayout::shared;
  Normalization normalization;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct PredictionTable {
  Eigen::MatrixXd locations;  // n x 2 raw
  Eigen::MatrixXd mean;       // n x J
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;
  Eigen::MatrixXd rho;        // n x J(J-1)/2
};

PredictionTable make_prediction_table(const Eigen::MatrixXd& raw_locations,
                                      const std::vector<PredictiveSummary>& summaries);
void save_predictions(const std::string& path, const PredictionTable& table);
PredictionTable load_predictions(const std::string& path);

void save_metrics(const std::string& path, const MetricsReport& report);
MetricsReport load_metrics(const std::string& path);

/// Everything but wall-clock time, so reruns write identical bytes.
void save_train_report(const std::string& path, const TrainReport& report);

/// Truth rows for the train, val and test splits, in that order.
void save_truth(const std::string& path, const SimOutput& sim);

struct TruthTable {
  std::vector<std::string> split;
  Eigen::MatrixXd locations;
  Eigen::MatrixXd rho;  // n x J(J-1)/2
};
TruthTable load_truth(const std::string& path);

/// Writes `contents` to `path` through a temporary file and rename, so a
/// failed command never leaves a partial file behind.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace dnc

#endif  // DNC_IO_HPP
