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

#include "dnc/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

#include "dnc/errors.hpp"

namespace dnc {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

// Parsed CSV: header names plus a row-major numeric body.
struct CsvBody {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for reading", path);
  return in;
}

CsvBody read_numeric_csv(const std::string& path, std::size_t first_numeric = 0) {
  std::ifstream in = open_input(path);
  CsvBody body;
  std::string line;
  long lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (!have_header) {
      for (auto f : fields) body.header.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != body.header.size()) {
      throw DataError("expected " + std::to_string(body.header.size()) + " fields, found " +
                          std::to_string(fields.size()),
                      path, lineno);
    }
    std::vector<double> row(fields.size(), 0.0);
    for (std::size_t c = first_numeric; c < fields.size(); ++c) {
      const std::string_view f = fields[c];
      double v = 0.0;
      const auto res = f.empty() ? std::from_chars_result{f.data(), std::errc::invalid_argument}
                                 : std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw DataError("column '" + body.header[c] + "': non-numeric value '" + std::string(f) + "'", path,
                        lineno);
      }
      if (!std::isfinite(v)) {
        throw DataError("column '" + body.header[c] + "': non-finite value '" + std::string(f) + "'", path,
                        lineno);
      }
      row[c] = v;
    }
    body.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("file is empty", path);
  return body;
}

Eigen::MatrixXd columns(const CsvBody& body, std::size_t first, std::size_t count) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(body.rows.size()), static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < body.rows.size(); ++i)
    for (std::size_t c = 0; c < count; ++c) m(i, c) = body.rows[i][first + c];
  return m;
}

void expect_column(const CsvBody& body, std::size_t index, const std::string& name, const std::string& path) {
  if (index >= body.header.size() || body.header[index] != name) {
    throw DataError("header column " + std::to_string(index + 1) + " must be '" + name + "'" +
                        (index < body.header.size() ? ", found '" + body.header[index] + "'" : ""),
                    path, 1);
  }
}

// Counts a run of consecutively numbered columns prefix1, prefix2, ...
std::size_t count_run(const CsvBody& body, std::size_t start, const std::string& prefix) {
  std::size_t k = 0;
  while (start + k < body.header.size() && body.header[start + k] == prefix + std::to_string(k + 1)) ++k;
  return k;
}

void append_row(std::string& out, std::initializer_list<const Eigen::VectorXd*> parts) {
  bool first = true;
  for (const Eigen::VectorXd* p : parts) {
    for (Eigen::Index k = 0; k < p->size(); ++k) {
      if (!first) out += ',';
      out += format_double((*p)[k]);
      first = false;
    }
  }
  out += '\n';
}

std::string pair_suffix(int j, int k) { return std::to_string(j + 1) + "_" + std::to_string(k + 1); }

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return flat;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_to_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string activation_name(nn::Activation a) { return a == nn::Activation::relu ? "relu" : "identity"; }

nn::Activation parse_activation(const std::string& s) {
  if (s == "relu") return nn::Activation::relu;
  if (s == "identity") return nn::Activation::identity;
  throw DataError("unknown activation '" + s + "'");
}

json network_to_json(const nn::DenseNetwork& net) {
  json layers = json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    layers.push_back({{"weights", matrix_to_json(net.weights[l])}, {"biases", vector_to_json(net.biases[l])}});
  }
  return {{"widths", net.widths()},
          {"hidden_activation", activation_name(net.hidden_activation)},
          {"output_activation", activation_name(net.output_activation)},
          {"layers", layers}};
}

nn::DenseNetwork network_from_json(const json& j) {
  const auto widths = j.at("widths").get<std::vector<int>>();
  const json& layers = j.at("layers");
  if (widths.size() < 2 || layers.size() != widths.size() - 1) {
    throw DataError("network widths and layer count disagree");
  }
  nn::DenseNetwork net = nn::zero_network(widths);
  net.hidden_activation = parse_activation(j.at("hidden_activation").get<std::string>());
  net.output_activation = parse_activation(j.at("output_activation").get<std::string>());
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const Eigen::VectorXd b = json_to_vector(layers[l].at("biases"));
    Eigen::MatrixXd& W = net.weights[l];
    if (static_cast<Eigen::Index>(w.size()) != W.size() || b.size() != net.biases[l].size()) {
      throw DataError("layer " + std::to_string(l + 1) + " parameter count does not match its widths");
    }
    for (Eigen::Index r = 0, k = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[k++];
    net.biases[l] = b;
  }
  nn::validate(net);
  return net;
}

json read_json(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), path);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string to_string(DesignLayout layout) { return layout == DesignLayout::shared ? "shared" : "per_outcome"; }

DesignLayout parse_layout(std::string_view name) {
  if (name == "shared") return DesignLayout::shared;
  if (name == "per_outcome") return DesignLayout::per_outcome;
  throw ConfigError("unknown design layout '" + std::string(name) + "' (expected shared or per_outcome)");
}

Eigen::MatrixXd Normalization::apply(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != 2) throw ShapeError("locations must have two columns");
  Eigen::MatrixXd out(raw.rows(), 2);
  for (int c = 0; c < 2; ++c) {
    const double range = max[c] - min[c];
    const double scale = range > 0.0 ? 1.0 / range : 1.0;
    out.col(c) = ((raw.col(c).array() - min[c]) * scale).matrix();
  }
  return out;
}

Eigen::MatrixXd Normalization::invert(const Eigen::MatrixXd& unit) const {
  if (unit.cols() != 2) throw ShapeError("locations must have two columns");
  Eigen::MatrixXd out(unit.rows(), 2);
  for (int c = 0; c < 2; ++c) {
    const double range = max[c] - min[c];
    out.col(c) = (unit.col(c).array() * (range > 0.0 ? range : 1.0) + min[c]).matrix();
  }
  return out;
}

Normalization fit_normalization(const Eigen::MatrixXd& raw_locations) {
  if (raw_locations.rows() < 1 || raw_locations.cols() != 2) throw ShapeError("need n x 2 locations, n >= 1");
  Normalization n;
  n.min = raw_locations.colwise().minCoeff().transpose();
  n.max = raw_locations.colwise().maxCoeff().transpose();
  return n;
}

DatasetTable read_dataset_table(const std::string& path, bool require_outcomes) {
  const CsvBody body = read_numeric_csv(path);
  expect_column(body, 0, "s1", path);
  expect_column(body, 1, "s2", path);
  const std::size_t p = count_run(body, 2, "x");
  const std::size_t J = count_run(body, 2 + p, "y");
  if (2 + p + J != body.header.size()) {
    const std::size_t bad = 2 + p + J;
    throw DataError("unexpected header column '" + body.header[bad] + "' at position " + std::to_string(bad + 1) +
                        " (expected s1,s2,x1..xp,y1..yJ)",
                    path, 1);
  }
  if (require_outcomes && J == 0) throw DataError("no outcome columns y1..yJ", path, 1);
  if (body.rows.empty()) throw DataError("no data rows", path);
  DatasetTable t;
  t.locations = columns(body, 0, 2);
  t.covariates = columns(body, 2, p);
  t.outcomes = columns(body, 2 + p, J);
  return t;
}

LoadedDataset load_dataset(const std::string& path, DesignLayout layout, const Normalization* norm) {
  const DatasetTable t = read_dataset_table(path, true);
  const int J = static_cast<int>(t.outcomes.cols());
  if (layout == DesignLayout::per_outcome && t.covariates.cols() % J != 0) {
    throw DataError("per_outcome layout needs a covariate count divisible by J = " + std::to_string(J), path);
  }
  LoadedDataset out;
  out.raw_locations = t.locations;
  out.normalization = norm ? *norm : fit_normalization(t.locations);
  out.data.locations = out.normalization.apply(t.locations);
  out.data.design = build_design(t.covariates, J, layout);
  out.data.outcomes = t.outcomes;
  return out;
}

void save_dataset(const std::string& path, const Eigen::MatrixXd& locations, const Eigen::MatrixXd& covariates,
                  const Eigen::MatrixXd& outcomes) {
  const Eigen::Index n = locations.rows();
  if (locations.cols() != 2 || covariates.rows() != n || outcomes.rows() != n) {
    throw ShapeError("dataset columns disagree in row count");
  }
  std::string out = "s1,s2";
  for (Eigen::Index k = 0; k < covariates.cols(); ++k) out += ",x" + std::to_string(k + 1);
  for (Eigen::Index k = 0; k < outcomes.cols(); ++k) out += ",y" + std::to_string(k + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd s = locations.row(i).transpose();
    const Eigen::VectorXd x = covariates.row(i).transpose();
    const Eigen::VectorXd y = outcomes.row(i).transpose();
    append_row(out, {&s, &x, &y});
  }
  write_file_atomic(path, out);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const DncModel& m = ckpt.model;
  validate(m);
  json nets_h = json::array(), nets_psi = json::array();
  for (const auto& net : m.factor_nets) nets_h.push_back(network_to_json(net));
  for (const auto& net : m.loading_nets) nets_psi.push_back(network_to_json(net));
  const json doc = {{"format", "dnc-checkpoint"},
                    {"schema_version", kCheckpointVersion},
                    {"num_outcomes", m.num_outcomes},
                    {"num_covariates", m.num_covariates},
                    {"layout", to_string(ckpt.layout)},
                    {"normalization",
                     {{"min", vector_to_json(ckpt.normalization.min)},
                      {"max", vector_to_json(ckpt.normalization.max)}}},
                    {"beta", vector_to_json(m.beta)},
                    {"sigma2", m.sigma2},
                    {"keep_prob_h", m.keep_prob_h},
                    {"keep_prob_psi", m.keep_prob_psi},
                    {"lambda_w", m.lambda_w},
                    {"lambda_b", m.lambda_b},
                    {"seed", m.seed},
                    {"factor_nets", nets_h},
                    {"loading_nets", nets_psi}};
  write_file_atomic(path, doc.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const json doc = read_json(path);
  try {
    if (doc.value("format", std::string{}) != "dnc-checkpoint") throw DataError("not a DNC checkpoint", path);
    const int version = doc.at("schema_version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError("checkpoint schema version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")",
                      path);
    }
    Checkpoint c;
    DncModel& m = c.model;
    m.num_outcomes = doc.at("num_outcomes").get<int>();
    m.num_covariates = doc.at("num_covariates").get<int>();
    c.layout = parse_layout(doc.at("layout").get<std::string>());
    const Eigen::VectorXd lo = json_to_vector(doc.at("normalization").at("min"));
    const Eigen::VectorXd hi = json_to_vector(doc.at("normalization").at("max"));
    if (lo.size() != 2 || hi.size() != 2) throw DataError("normalization bounds must have two entries", path);
    c.normalization.min = lo;
    c.normalization.max = hi;
    m.beta = json_to_vector(doc.at("beta"));
    m.sigma2 = doc.at("sigma2").get<double>();
    m.keep_prob_h = doc.at("keep_prob_h").get<double>();
    m.keep_prob_psi = doc.at("keep_prob_psi").get<double>();
    m.lambda_w = doc.at("lambda_w").get<double>();
    m.lambda_b = doc.at("lambda_b").get<double>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& j : doc.at("factor_nets")) m.factor_nets.push_back(network_from_json(j));
    for (const auto& j : doc.at("loading_nets")) m.loading_nets.push_back(network_from_json(j));
    validate(m);
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what(), path);
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what(), path);
  }
}

PredictionTable make_prediction_table(const Eigen::MatrixXd& raw_locations,
                                      const std::vector<PredictiveSummary>& summaries) {
  const Eigen::Index n = raw_locations.rows();
  if (static_cast<Eigen::Index>(summaries.size()) != n) throw ShapeError("one summary per location required");
  const Eigen::Index J = n > 0 ? summaries[0].mu_y.size() : 0;
  PredictionTable t;
  t.locations = raw_locations;
  t.mean.resize(n, J);
  t.lower.resize(n, J);
  t.upper.resize(n, J);
  t.rho.resize(n, J * (J - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PredictiveSummary& s = summaries[static_cast<std::size_t>(i)];
    t.mean.row(i) = s.mu_y.transpose();
    t.lower.row(i) = s.lower.transpose();
    t.upper.row(i) = s.upper.transpose();
    for (Eigen::Index j = 0, k = 0; j < J; ++j)
      for (Eigen::Index l = j + 1; l < J; ++l) t.rho(i, k++) = s.rho(j, l);
  }
  return t;
}

void save_predictions(const std::string& path, const PredictionTable& t) {
  const Eigen::Index n = t.locations.rows();
  const int J = static_cast<int>(t.mean.cols());
  std::string out = "s1,s2";
  for (int j = 0; j < J; ++j) {
    const std::string k = std::to_string(j + 1);
    out += ",mu_y" + k + ",lo" + k + ",hi" + k;
  }
  for (int j = 0; j < J; ++j)
    for (int l = j + 1; l < J; ++l) out += ",rho_" + pair_suffix(j, l);
  out += '\n';
  Eigen::VectorXd row(2 + 3 * J + t.rho.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    row[0] = t.locations(i, 0);
    row[1] = t.locations(i, 1);
    for (int j = 0; j < J; ++j) {
      row[2 + 3 * j] = t.mean(i, j);
      row[3 + 3 * j] = t.lower(i, j);
      row[4 + 3 * j] = t.upper(i, j);
    }
    row.tail(t.rho.cols()) = t.rho.row(i).transpose();
    append_row(out, {&row});
  }
  write_file_atomic(path, out);
}

PredictionTable load_predictions(const std::string& path) {
  const CsvBody body = read_numeric_csv(path);
  expect_column(body, 0, "s1", path);
  expect_column(body, 1, "s2", path);
  std::size_t J = 0;
  while (2 + 3 * J < body.header.size() && body.header[2 + 3 * J] == "mu_y" + std::to_string(J + 1)) {
    const std::string k = std::to_string(J + 1);
    expect_column(body, 3 + 3 * J, "lo" + k, path);
    expect_column(body, 4 + 3 * J, "hi" + k, path);
    ++J;
  }
  if (J == 0) throw DataError("no prediction columns mu_y1,lo1,hi1", path, 1);
  std::size_t c = 2 + 3 * J;
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t l = j + 1; l < J; ++l)
      expect_column(body, c++, "rho_" + pair_suffix(static_cast<int>(j), static_cast<int>(l)), path);
  if (c != body.header.size()) throw DataError("unexpected trailing header column '" + body.header[c] + "'", path, 1);
  if (body.rows.empty()) throw DataError("no data rows", path);

  PredictionTable t;
  const auto n = static_cast<Eigen::Index>(body.rows.size());
  t.locations = columns(body, 0, 2);
  t.mean.resize(n, static_cast<Eigen::Index>(J));
  t.lower.resizeLike(t.mean);
  t.upper.resizeLike(t.mean);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      t.mean(i, j) = body.rows[i][2 + 3 * j];
      t.lower(i, j) = body.rows[i][3 + 3 * j];
      t.upper(i, j) = body.rows[i][4 + 3 * j];
    }
  }
  t.rho = columns(body, 2 + 3 * J, J * (J - 1) / 2);
  return t;
}

void save_metrics(const std::string& path, const MetricsReport& report) {
  json outcomes = json::object();
  for (std::size_t j = 0; j < report.outcomes.size(); ++j) {
    const OutcomeMetrics& m = report.outcomes[j];
    outcomes[std::to_string(j + 1)] = {{"rmspe", m.rmspe}, {"coverage", m.coverage}, {"mean_length", m.mean_length}};
  }
  const json doc = {{"n_test", report.n_test}, {"fit_seconds", report.fit_seconds}, {"outcomes", outcomes}};
  write_file_atomic(path, doc.dump(2) + "\n");
}

MetricsReport load_metrics(const std::string& path) {
  const json doc = read_json(path);
  try {
    MetricsReport r;
    r.n_test = doc.at("n_test").get<long>();
    r.fit_seconds = doc.at("fit_seconds").get<double>();
    const json& o = doc.at("outcomes");
    for (std::size_t j = 1; j <= o.size(); ++j) {
      const json& e = o.at(std::to_string(j));
      r.outcomes.push_back({e.at("rmspe").get<double>(), e.at("coverage").get<double>(),
                            e.at("mean_length").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid metrics report: ") + e.what(), path);
  }
}

void save_train_report(const std::string& path, const TrainReport& r) {
  const json doc = {{"epochs_run", r.epochs_run},
                    {"best_epoch", r.best_epoch},
                    {"beta", vector_to_json(r.beta)},
                    {"sigma2", r.sigma2},
                    {"train_loss", r.train_loss},
                    {"val_rmspe", r.val_rmspe}};
  write_file_atomic(path, doc.dump(1) + "\n");
}

void save_truth(const std::string& path, const SimOutput& sim) {
  const SimTruth& t = sim.truth;
  const int J = static_cast<int>(t.h.cols());
  std::string out = "split,s1,s2";
  for (int j = 0; j < J; ++j) out += ",h" + std::to_string(j + 1);
  for (int j = 0; j < J; ++j)
    for (int l = j; l < J; ++l) out += ",psi_" + pair_suffix(j, l);
  for (int j = 0; j < J; ++j) out += ",w" + std::to_string(j + 1);
  for (int j = 0; j < J; ++j) out += ",eps" + std::to_string(j + 1);
  for (int j = 0; j < J; ++j)
    for (int l = j + 1; l < J; ++l) out += ",rho_" + pair_suffix(j, l);
  out += '\n';
  auto emit = [&](const char* name, const std::vector<Eigen::Index>& idx) {
    for (Eigen::Index i : idx) {
      out += name;
      out += ',';
      const Eigen::VectorXd s = sim.all.locations.row(i).transpose();
      const Eigen::VectorXd h = t.h.row(i).transpose();
      const Eigen::VectorXd psi = t.psi.row(i).transpose();
      const Eigen::VectorXd w = t.w.row(i).transpose();
      const Eigen::VectorXd eps = t.eps.row(i).transpose();
      const Eigen::VectorXd rho = t.rho.row(i).transpose();
      append_row(out, {&s, &h, &psi, &w, &eps, &rho});
    }
  };
  emit("train", sim.train_idx);
  emit("val", sim.val_idx);
  emit("test", sim.test_idx);
  write_file_atomic(path, out);
}

TruthTable load_truth(const std::string& path) {
  const CsvBody body = read_numeric_csv(path, 1);
  expect_column(body, 0, "split", path);
  expect_column(body, 1, "s1", path);
  expect_column(body, 2, "s2", path);
  std::vector<std::size_t> rho_cols;
  for (std::size_t c = 0; c < body.header.size(); ++c)
    if (body.header[c].rfind("rho_", 0) == 0) rho_cols.push_back(c);

  // Re-read the split labels, which the numeric parser skipped.
  std::ifstream in = open_input(path);
  std::string line;
  std::getline(in, line);
  TruthTable t;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    t.split.emplace_back(split_fields(line).front());
  }
  t.locations = columns(body, 1, 2);
  t.rho.resize(static_cast<Eigen::Index>(body.rows.size()), static_cast<Eigen::Index>(rho_cols.size()));
  for (std::size_t i = 0; i < body.rows.size(); ++i)
    for (std::size_t k = 0; k < rho_cols.size(); ++k) t.rho(i, k) = body.rows[i][rho_cols[k]];
  return t;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing", path);
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("write failed", path);
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move temporary file into place", path);
  }
}

}  // namespace dnc
