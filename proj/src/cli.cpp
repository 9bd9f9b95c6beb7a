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

#include "dnc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "dnc/errors.hpp"
#include "dnc/geosim.hpp"
#include "dnc/io.hpp"
#include "dnc/metrics.hpp"
#include "dnc/posterior.hpp"

namespace dnc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr Eigen::Index kPredictChunk = 8192;

template <class T>
T config_value(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::vector<int> config_widths(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array of layer widths");
  return config_value<std::vector<int>>(v, key);
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

Sigma2Normalization parse_sigma2_normalization(const std::string& s) {
  if (s == "per_location") return Sigma2Normalization::per_location;
  if (s == "per_component") return Sigma2Normalization::per_component;
  throw ConfigError("unknown sigma2_normalization '" + s + "'");
}

// Raw flag values. Only flags the user actually passed are applied.
struct Flags {
  std::string config, design, train, val, test, model, out, pred, truth, rho_out, report, layout;
  long n = 0;
  std::uint64_t seed = 0;
  int samples = 0, max_epochs = 0, batch_size = 0, patience = 0;
  double keep_prob = 0.0, lr = 0.0, fit_seconds = 0.0;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg;
  if (f.given("config")) cfg = load_run_config(f.config, cfg);
  if (f.given("design")) cfg.design = f.design;
  if (f.given("n")) cfg.n = f.n;
  if (f.given("seed")) cfg.train.seed = f.seed;
  if (f.given("train")) cfg.train_path = f.train;
  if (f.given("val")) cfg.val_path = f.val;
  if (f.given("test")) cfg.test_path = f.test;
  if (f.given("model")) cfg.model_path = f.model;
  if (f.given("out")) cfg.out_path = f.out;
  if (f.given("samples")) cfg.samples = f.samples;
  if (f.given("max-epochs")) cfg.train.max_epochs = f.max_epochs;
  if (f.given("keep-prob")) cfg.train.keep_prob_h = cfg.train.keep_prob_psi = f.keep_prob;
  if (f.given("lr")) cfg.train.learning_rate = f.lr;
  if (f.given("batch-size")) cfg.train.batch_size = f.batch_size;
  if (f.given("patience")) cfg.train.patience = f.patience;
  if (f.given("layout")) cfg.layout = parse_layout(f.layout);
  validate(cfg);
  return cfg;
}

const std::string& require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required setting --") + flag);
  return value;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
  return out;
}

int cmd_simulate(const RunConfig& cfg) {
  const std::string& dir = require_path(cfg.out_path, "out");
  SimOutput sim;
  if (cfg.design == "stationary") {
    StationaryParams p;
    p.n = cfg.n;
    p.seed = cfg.train.seed;
    sim = simulate_stationary(p);
  } else if (cfg.design == "deepgp") {
    DeepGpParams p;
    p.n = cfg.n;
    p.seed = cfg.train.seed;
    sim = simulate_deepgp(p);
  } else {
    throw ConfigError("unknown design '" + cfg.design + "' (expected stationary or deepgp)");
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory", dir);
  auto write_split = [&](const char* name, const std::vector<Eigen::Index>& idx) {
    save_dataset((fs::path(dir) / name).string(), rows_of(sim.all.locations, idx), rows_of(sim.covariates, idx),
                 rows_of(sim.all.outcomes, idx));
  };
  write_split("train.csv", sim.train_idx);
  write_split("val.csv", sim.val_idx);
  write_split("test.csv", sim.test_idx);
  save_truth((fs::path(dir) / "truth.csv").string(), sim);

  json params = json::object();
  for (const auto& [k, v] : sim.params) {
    if (v == std::floor(v) && std::abs(v) < 1e15) params[k] = static_cast<long long>(v);
    else params[k] = v;
  }
  const json manifest = {{"design", sim.design},
                         {"layout", to_string(sim.layout)},
                         {"num_outcomes", sim.all.num_outcomes()},
                         {"params", params},
                         {"files",
                          {{"train", "train.csv"}, {"val", "val.csv"}, {"test", "test.csv"}, {"truth", "truth.csv"}}}};
  write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "simulate: " << sim.design << " n=" << cfg.n << " (" << sim.train_idx.size() << "/"
            << sim.val_idx.size() << "/" << sim.test_idx.size() << ") -> " << dir << "\n";
  return kExitOk;
}

// Layout from the config or flag, else the simulator manifest next to the
// training file, else shared.
DesignLayout resolve_layout(const RunConfig& cfg) {
  if (cfg.layout) return *cfg.layout;
  const fs::path manifest = fs::path(cfg.train_path).parent_path() / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    const json doc = json::parse(in, nullptr, false);
    if (!doc.is_discarded() && doc.contains("layout") && doc["layout"].is_string()) {
      return parse_layout(doc["layout"].get<std::string>());
    }
  }
  return DesignLayout::shared;
}

int cmd_fit(const RunConfig& cfg, const Flags& f) {
  const std::string& train_path = require_path(cfg.train_path, "train");
  const std::string& val_path = require_path(cfg.val_path, "val");
  const std::string& model_path = require_path(cfg.model_path, "model");
  const DesignLayout layout = resolve_layout(cfg);

  const LoadedDataset train = load_dataset(train_path, layout);
  const LoadedDataset val = load_dataset(val_path, layout, &train.normalization);
  if (val.data.num_outcomes() != train.data.num_outcomes() ||
      val.data.num_covariates() != train.data.num_covariates()) {
    throw DataError("validation columns do not match the training file", val_path);
  }

  ModelSettings settings;
  settings.arch = cfg.arch;
  settings.keep_prob_h = cfg.train.keep_prob_h;
  settings.keep_prob_psi = cfg.train.keep_prob_psi;
  settings.lambda_w = cfg.train.lambda_w;
  settings.lambda_b = cfg.train.lambda_b;
  const DncModel init =
      init_model(train.data.num_outcomes(), train.data.num_covariates(), settings, cfg.train.seed);
  const FitResult res = fit(init, train.data, val.data, cfg.train);

  save_checkpoint(model_path, Checkpoint{res.model, layout, train.normalization});
  const std::string report_path = f.given("report") ? f.report : model_path + ".report.json";
  save_train_report(report_path, res.report);
  std::cout << "fit: " << res.report.epochs_run << " epochs (best " << res.report.best_epoch
            << "), val RMSPE " << res.report.val_rmspe[res.report.best_epoch - 1] << ", sigma2 "
            << res.report.sigma2 << ", " << res.report.seconds << " s -> " << model_path << "\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const Flags& f) {
  const std::string& model_path = require_path(cfg.model_path, "model");
  const std::string& test_path = require_path(cfg.test_path, "test");
  const std::string& out_path = require_path(cfg.out_path, "out");
  Checkpoint ckpt = load_checkpoint(model_path);
  DncModel& model = ckpt.model;
  if (f.given("keep-prob")) model.keep_prob_h = model.keep_prob_psi = f.keep_prob;
  validate(model);

  const DatasetTable t = read_dataset_table(test_path, false);
  const int J = model.num_outcomes;
  const Eigen::MatrixXd design = build_design(t.covariates, J, ckpt.layout);
  if (design.cols() != model.num_covariates) {
    throw DataError("covariate columns do not match the model (" + std::to_string(design.cols()) + " vs " +
                        std::to_string(model.num_covariates) + ")",
                    test_path);
  }
  const Eigen::MatrixXd locations = ckpt.normalization.apply(t.locations);
  const int threads = thread_count();

  std::vector<PredictiveSummary> summaries;
  summaries.reserve(static_cast<std::size_t>(locations.rows()));
  for (Eigen::Index start = 0; start < locations.rows(); start += kPredictChunk) {
    const Eigen::Index len = std::min(kPredictChunk, locations.rows() - start);
    const PosteriorDraws draws =
        draw_posterior(model, locations.middleRows(start, len), cfg.samples, cfg.train.seed, threads);
    auto part = summarize(draws, model, design.middleRows(start * J, len * J));
    std::move(part.begin(), part.end(), std::back_inserter(summaries));
  }
  save_predictions(out_path, make_prediction_table(t.locations, summaries));
  std::cout << "predict: " << locations.rows() << " locations, M=" << cfg.samples << " -> " << out_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const Flags& f) {
  const std::string& pred_path = require_path(f.pred, "pred");
  const std::string& test_path = require_path(cfg.test_path, "test");
  const std::string& out_path = require_path(cfg.out_path, "out");
  const PredictionTable pred = load_predictions(pred_path);
  const DatasetTable truth = read_dataset_table(test_path, true);
  if (truth.outcomes.rows() != pred.mean.rows()) {
    throw DataError("prediction file has " + std::to_string(pred.mean.rows()) + " rows but the truth file has " +
                        std::to_string(truth.outcomes.rows()),
                    pred_path);
  }
  if (truth.outcomes.cols() != pred.mean.cols()) {
    throw DataError("prediction and truth files differ in outcome count", pred_path);
  }
  if (truth.locations != pred.locations) {
    throw DataError("prediction locations do not match the truth file row by row", pred_path);
  }
  MetricsReport report = evaluate_predictions(truth.outcomes, pred.mean, pred.lower, pred.upper);
  if (f.given("fit-seconds")) report.fit_seconds = f.fit_seconds;
  save_metrics(out_path, report);

  if (f.given("rho-out")) {
    const TruthTable sidecar = load_truth(require_path(f.truth, "truth"));
    if (sidecar.rho.cols() != pred.rho.cols()) throw DataError("truth sidecar has a different pair count", f.truth);
    std::map<std::pair<double, double>, Eigen::Index> where;
    for (Eigen::Index i = 0; i < sidecar.locations.rows(); ++i)
      where.emplace(std::pair{sidecar.locations(i, 0), sidecar.locations(i, 1)}, i);
    const int J = static_cast<int>(pred.mean.cols());
    std::string out = "s1,s2,pair,rho_true,rho_hat\n";
    for (Eigen::Index i = 0; i < pred.locations.rows(); ++i) {
      const auto it = where.find({pred.locations(i, 0), pred.locations(i, 1)});
      if (it == where.end()) throw DataError("location of prediction row " + std::to_string(i + 1) +
                                             " is missing from the truth sidecar", f.truth);
      for (int j = 0, k = 0; j < J; ++j) {
        for (int l = j + 1; l < J; ++l, ++k) {
          out += format_double(pred.locations(i, 0)) + ',' + format_double(pred.locations(i, 1)) + ',' +
                 std::to_string(j + 1) + '_' + std::to_string(l + 1) + ',' +
                 format_double(sidecar.rho(it->second, k)) + ',' + format_double(pred.rho(i, k)) + '\n';
        }
      }
    }
    write_file_atomic(f.rho_out, out);
  }

  std::cout << "evaluate: n_test=" << report.n_test;
  for (std::size_t j = 0; j < report.outcomes.size(); ++j) {
    const OutcomeMetrics& m = report.outcomes[j];
    std::cout << "  y" << j + 1 << " rmspe=" << m.rmspe << " cvg=" << m.coverage << " len=" << m.mean_length;
  }
  std::cout << "\n";
  return kExitOk;
}

}  // namespace

RunConfig load_run_config(const std::string& path, RunConfig cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("config file " + path + " is not a JSON object");
  TrainConfig& t = cfg.train;
  for (const auto& [key, v] : doc.items()) {
    if (key == "factor_hidden") cfg.arch.factor_hidden = config_widths(v, key);
    else if (key == "loading_hidden") cfg.arch.loading_hidden = config_widths(v, key);
    else if (key == "learning_rate") t.learning_rate = config_value<double>(v, key);
    else if (key == "batch_size") t.batch_size = config_value<int>(v, key);
    else if (key == "max_epochs") t.max_epochs = config_value<int>(v, key);
    else if (key == "patience") t.patience = config_value<int>(v, key);
    else if (key == "optimizer") t.optimizer = parse_optimizer(config_value<std::string>(v, key));
    else if (key == "adam_beta1") t.adam_beta1 = config_value<double>(v, key);
    else if (key == "adam_beta2") t.adam_beta2 = config_value<double>(v, key);
    else if (key == "adam_eps") t.adam_eps = config_value<double>(v, key);
    else if (key == "seed") t.seed = config_value<std::uint64_t>(v, key);
    else if (key == "keep_prob") t.keep_prob_h = t.keep_prob_psi = config_value<double>(v, key);
    else if (key == "keep_prob_h") t.keep_prob_h = config_value<double>(v, key);
    else if (key == "keep_prob_psi") t.keep_prob_psi = config_value<double>(v, key);
    else if (key == "lambda_w") t.lambda_w = config_value<double>(v, key);
    else if (key == "lambda_b") t.lambda_b = config_value<double>(v, key);
    else if (key == "sigma2_normalization")
      t.sigma2_normalization = parse_sigma2_normalization(config_value<std::string>(v, key));
    else if (key == "samples") cfg.samples = config_value<int>(v, key);
    else if (key == "layout") cfg.layout = parse_layout(config_value<std::string>(v, key));
    else if (key == "design") cfg.design = config_value<std::string>(v, key);
    else if (key == "n") cfg.n = config_value<long>(v, key);
    else if (key == "train") cfg.train_path = config_value<std::string>(v, key);
    else if (key == "val") cfg.val_path = config_value<std::string>(v, key);
    else if (key == "test") cfg.test_path = config_value<std::string>(v, key);
    else if (key == "model") cfg.model_path = config_value<std::string>(v, key);
    else if (key == "out") cfg.out_path = config_value<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "' in " + path);
  }
  return cfg;
}

void validate(const RunConfig& cfg) {
  validate(cfg.train);
  for (const auto* widths : {&cfg.arch.factor_hidden, &cfg.arch.loading_hidden}) {
    if (widths->size() + 1 > static_cast<std::size_t>(nn::kMaxLayers)) {
      throw ConfigError("at most " + std::to_string(nn::kMaxLayers - 1) + " hidden layers are supported");
    }
    for (int w : *widths)
      if (w < 1) throw ConfigError("hidden widths must be positive");
  }
  if (cfg.samples < 2) throw ConfigError("samples must be at least 2");
  if (cfg.n < 3) throw ConfigError("n must be at least 3");
}

int thread_count() {
  if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) {
      throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer, got '" + env + "'");
    }
    return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Deep neural coregionalization for multivariate spatial data", "dnc"};
  app.require_subcommand(1);
  Flags f;
  auto& o = f.opts;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
  o["design"] = sim->add_option("--design", f.design, "stationary or deepgp");
  o["n"] = sim->add_option("--n", f.n, "Number of locations (default 2500)");

  auto* fitc = app.add_subcommand("fit", "Train a model and write a checkpoint");
  o["train"] = fitc->add_option("--train", f.train, "Training dataset CSV");
  o["val"] = fitc->add_option("--val", f.val, "Validation dataset CSV");
  o["max-epochs"] = fitc->add_option("--max-epochs", f.max_epochs, "Epoch limit");
  o["lr"] = fitc->add_option("--lr", f.lr, "Learning rate");
  o["batch-size"] = fitc->add_option("--batch-size", f.batch_size, "Mini-batch size");
  o["patience"] = fitc->add_option("--patience", f.patience, "Early-stopping patience in epochs");
  o["layout"] = fitc->add_option("--layout", f.layout, "Covariate layout: shared or per_outcome");
  o["report"] = fitc->add_option("--report", f.report, "Training report path (default <model>.report.json)");

  auto* pred = app.add_subcommand("predict", "Monte Carlo dropout predictions at new locations");
  o["samples"] = pred->add_option("-M,--samples", f.samples, "Posterior draws (default 200)");

  auto* eval = app.add_subcommand("evaluate", "Score predictions against held-out truth");
  o["pred"] = eval->add_option("--pred", f.pred, "Prediction CSV")->required();
  o["truth"] = eval->add_option("--truth", f.truth, "Simulator truth sidecar for the rho export");
  o["rho-out"] = eval->add_option("--rho-out", f.rho_out, "Tidy CSV of true and estimated rho")->needs(o["truth"]);
  o["fit-seconds"] = eval->add_option("--fit-seconds", f.fit_seconds, "Fit wall time recorded in the report");

  // Options shared by several commands.
  for (auto* c : {sim, fitc, pred, eval}) {
    o["config"] = c->add_option("--config", f.config, "JSON run configuration");
    o["out"] = c->add_option("--out", f.out, "Output path");
  }
  for (auto* c : {sim, fitc, pred}) o["seed"] = c->add_option("--seed", f.seed, "Random seed");
  for (auto* c : {fitc, pred}) {
    o["model"] = c->add_option("--model", f.model, "Checkpoint path");
    o["keep-prob"] = c->add_option("--keep-prob", f.keep_prob, "Dropout keep probability");
  }
  for (auto* c : {pred, eval}) o["test"] = c->add_option("--test", f.test, "Test dataset CSV");
  sim->get_option("--design")->check(CLI::IsMember({"stationary", "deepgp"}));

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  // Rebind each logical flag to whichever registration was actually used.
  for (auto& [name, opt] : o) {
    for (auto* cand : {sim, fitc, pred, eval}) {
      auto* found = cand->get_option_no_throw("--" + name);
      if (found && found->count() > 0) opt = found;
    }
  }

  try {
    const RunConfig cfg = resolve_config(f);
    if (sim->parsed()) {
      if (cfg.design.empty()) throw ConfigError("missing required setting --design");
      return cmd_simulate(cfg);
    }
    if (fitc->parsed()) return cmd_fit(cfg, f);
    if (pred->parsed()) return cmd_predict(cfg, f);
    if (eval->parsed()) return cmd_evaluate(cfg, f);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "dnc: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergedError& e) {
    std::cerr << "dnc: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const NotPsdError& e) {
    std::cerr << "dnc: numerical failure: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const NumericError& e) {
    std::cerr << "dnc: numerical failure: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    std::cerr << "dnc: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "dnc: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "dnc: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace dnc
