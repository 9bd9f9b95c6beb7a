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
#include <cstdlib>
#include <fstream>

#include "dnc/cli.hpp"
#include "dnc/io.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace dnc;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<std::string> args) { return run_cli(std::vector<std::string>(args)); }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

long data_rows(const fs::path& p) {
  const std::string s = testutil::slurp(p);
  return static_cast<long>(std::count(s.begin(), s.end(), '\n')) - 1;
}

// Small simulated dataset plus a fast config, shared by the fit/predict cases.
struct Workspace {
  fs::path dir;
  fs::path config;

  explicit Workspace(const std::string& name) : dir(testutil::temp_dir(name)), config(dir / "run.json") {
    write_text(config, R"({"factor_hidden": [8], "loading_hidden": [8], "max_epochs": 4, "batch_size": 32})");
    REQUIRE(run({"simulate", "--design", "stationary", "--n", "200", "--seed", "3", "--out", (dir / "data").string()}) ==
            kExitOk);
  }
  std::string data(const std::string& f) const { return (dir / "data" / f).string(); }
  std::string path(const std::string& f) const { return (dir / f).string(); }

  int fit(const std::string& model, std::initializer_list<std::string> extra = {}) const {
    std::vector<std::string> a{"fit", "--config", config.string(), "--train", data("train.csv"), "--val",
                               data("val.csv"), "--model", path(model), "--seed", "1"};
    a.insert(a.end(), extra.begin(), extra.end());
    return run_cli(a);
  }
  int predict(const std::string& model, const std::string& out, std::initializer_list<std::string> extra = {}) const {
    std::vector<std::string> a{"predict", "--model", path(model), "--test", data("test.csv"), "--out", path(out),
                               "-M", "20", "--seed", "5"};
    a.insert(a.end(), extra.begin(), extra.end());
    return run_cli(a);
  }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate is deterministic and writes the documented files") {
  const auto dir = testutil::temp_dir("cli_sim");
  REQUIRE(run({"simulate", "--design", "stationary", "--seed", "7", "--n", "300", "--out", (dir / "a").string()}) == 0);
  REQUIRE(run({"simulate", "--design", "stationary", "--seed", "7", "--n", "300", "--out", (dir / "b").string()}) == 0);
  for (const char* f : {"train.csv", "val.csv", "test.csv", "truth.csv", "manifest.json"}) {
    CHECK(fs::exists(dir / "a" / f));
    CHECK(testutil::slurp(dir / "a" / f) == testutil::slurp(dir / "b" / f));
  }
  REQUIRE(run({"simulate", "--design", "deepgp", "--seed", "7", "--n", "300", "--out", (dir / "c").string()}) == 0);
  CHECK(testutil::slurp(dir / "c" / "train.csv") != testutil::slurp(dir / "a" / "train.csv"));
  const auto manifest = nlohmann::json::parse(testutil::slurp(dir / "c" / "manifest.json"));
  CHECK(manifest["layout"] == "shared");
  CHECK(manifest["design"] == "deepgp");
}

TEST_CASE("simulate default size gives the 1500/500/500 split") {
  const auto dir = testutil::temp_dir("cli_sim_default");
  REQUIRE(run({"simulate", "--design", "stationary", "--out", dir.string()}) == 0);
  CHECK(data_rows(dir / "train.csv") == 1500);
  CHECK(data_rows(dir / "val.csv") == 500);
  CHECK(data_rows(dir / "test.csv") == 500);
  CHECK(data_rows(dir / "truth.csv") == 2500);
}

TEST_CASE("usage and configuration errors exit with 2") {
  const auto dir = testutil::temp_dir("cli_usage");
  CHECK(run({"simulate", "--design", "unknown", "--out", dir.string()}) == kExitUsage);
  CHECK(run({}) == kExitUsage);
  CHECK(run({"frobnicate"}) == kExitUsage);
  CHECK(run({"simulate", "--out", dir.string()}) == kExitUsage);
  write_text(dir / "bad.json", R"({"learning_rate": 0.01, "colour": "blue"})");
  CHECK(run({"simulate", "--design", "stationary", "--config", (dir / "bad.json").string(), "--out",
             dir.string()}) == kExitUsage);
  write_text(dir / "neg.json", R"({"learning_rate": -1})");
  CHECK(run({"fit", "--config", (dir / "neg.json").string(), "--train", "a.csv", "--val", "b.csv", "--model",
             "m.json"}) == kExitUsage);
  CHECK(run({"simulate", "--design", "stationary", "--config", (dir / "absent.json").string(), "--out",
             dir.string()}) == kExitUsage);
}

TEST_CASE("missing validation file is a data error and leaves no checkpoint") {
  const Workspace w("cli_missing_val");
  const std::string model = w.path("m.json");
  const int code = run({"fit", "--config", w.config.string(), "--train", w.data("train.csv"), "--val",
                        w.path("nope.csv"), "--model", model});
  CHECK(code == kExitData);
  CHECK_FALSE(fs::exists(model));
  CHECK_FALSE(fs::exists(model + ".report.json"));
}

TEST_CASE("fit honours --max-epochs and flags override the config") {
  const Workspace w("cli_epochs");
  REQUIRE(w.fit("m.json", {"--max-epochs", "1"}) == kExitOk);
  const auto report = nlohmann::json::parse(testutil::slurp(w.path("m.json.report.json")));
  CHECK(report["epochs_run"] == 1);
  CHECK(report["train_loss"].size() == 1);
  CHECK_FALSE(report.contains("seconds"));
  const Checkpoint c = load_checkpoint(w.path("m.json"));
  CHECK(c.layout == DesignLayout::per_outcome);
  CHECK(c.model.factor_nets[0].widths() == std::vector<int>{2, 8, 1});
}

TEST_CASE("divergence exits with 4") {
  const Workspace w("cli_diverge");
  write_text(w.dir / "hot.json", R"({"factor_hidden": [8], "loading_hidden": [8], "max_epochs": 3,
                                     "optimizer": "sgd", "learning_rate": 1e150})");
  const int code = run({"fit", "--config", (w.dir / "hot.json").string(), "--train", w.data("train.csv"), "--val",
                        w.data("val.csv"), "--model", w.path("m.json")});
  CHECK(code == kExitDiverged);
  CHECK_FALSE(fs::exists(w.path("m.json")));
}

TEST_CASE("predict output schema, determinism and keep-prob override") {
  const Workspace w("cli_predict");
  REQUIRE(w.fit("m.json") == kExitOk);
  REQUIRE(w.predict("m.json", "p1.csv") == kExitOk);
  REQUIRE(w.predict("m.json", "p2.csv") == kExitOk);
  CHECK(testutil::slurp(w.path("p1.csv")) == testutil::slurp(w.path("p2.csv")));
  REQUIRE(run({"predict", "--model", w.path("m.json"), "--test", w.data("test.csv"), "--out", w.path("p3.csv"), "-M",
               "20", "--seed", "6"}) == kExitOk);
  CHECK(testutil::slurp(w.path("p1.csv")) != testutil::slurp(w.path("p3.csv")));

  const PredictionTable t = load_predictions(w.path("p1.csv"));
  CHECK(t.mean.rows() == 40);
  CHECK(t.rho.cols() == 1);  // J (J - 1) / 2 for J = 2
  const std::string text = testutil::slurp(w.path("p1.csv"));
  CHECK(text.substr(0, text.find('\n')) == "s1,s2,mu_y1,lo1,hi1,mu_y2,lo2,hi2,rho_1_2");

  REQUIRE(w.predict("m.json", "det.csv", {"--keep-prob", "1"}) == kExitOk);
  const PredictionTable d = load_predictions(w.path("det.csv"));
  const double half = 1.96 * std::sqrt(load_checkpoint(w.path("m.json")).model.sigma2);
  for (long i = 0; i < d.mean.rows(); ++i)
    for (long j = 0; j < 2; ++j) {
      CHECK(d.upper(i, j) - d.mean(i, j) == doctest::Approx(half).epsilon(1e-12));
      CHECK(d.mean(i, j) - d.lower(i, j) == doctest::Approx(half).epsilon(1e-12));
    }
  // With every unit kept the draw count does not matter.
  REQUIRE(run({"predict", "--model", w.path("m.json"), "--test", w.data("test.csv"), "--out", w.path("det_m.csv"),
               "-M", "3", "--seed", "5", "--keep-prob", "1"}) == kExitOk);
  CHECK(load_predictions(w.path("det_m.csv")).mean == d.mean);
}

TEST_CASE("predict output does not depend on the thread count") {
  const Workspace w("cli_threads");
  REQUIRE(w.fit("m.json") == kExitOk);
  ::setenv(kThreadsEnv, "1", 1);
  REQUIRE(w.predict("m.json", "t1.csv") == kExitOk);
  ::setenv(kThreadsEnv, "4", 1);
  REQUIRE(w.predict("m.json", "t4.csv") == kExitOk);
  CHECK(testutil::slurp(w.path("t1.csv")) == testutil::slurp(w.path("t4.csv")));
  ::setenv(kThreadsEnv, "lots", 1);
  CHECK(w.predict("m.json", "bad.csv") == kExitUsage);
  ::unsetenv(kThreadsEnv);
}

TEST_CASE("full pipeline is byte-identical across reruns") {
  const Workspace w("cli_repeat");
  for (const char* tag : {"a", "b"}) {
    const std::string m = std::string("m_") + tag + ".json";
    REQUIRE(w.fit(m) == kExitOk);
    REQUIRE(w.predict(m, std::string("p_") + tag + ".csv") == kExitOk);
    REQUIRE(run({"evaluate", "--pred", w.path(std::string("p_") + tag + ".csv"), "--test", w.data("test.csv"),
                 "--truth", w.data("truth.csv"), "--rho-out", w.path(std::string("rho_") + tag + ".csv"), "--out",
                 w.path(std::string("e_") + tag + ".json")}) == kExitOk);
  }
  CHECK(testutil::slurp(w.path("m_a.json")) == testutil::slurp(w.path("m_b.json")));
  CHECK(testutil::slurp(w.path("m_a.json.report.json")) == testutil::slurp(w.path("m_b.json.report.json")));
  CHECK(testutil::slurp(w.path("p_a.csv")) == testutil::slurp(w.path("p_b.csv")));
  CHECK(testutil::slurp(w.path("e_a.json")) == testutil::slurp(w.path("e_b.json")));
  CHECK(testutil::slurp(w.path("rho_a.csv")) == testutil::slurp(w.path("rho_b.csv")));
  CHECK(data_rows(w.path("rho_a.csv")) == 40);
}

TEST_CASE("evaluate scores perfect predictions") {
  const auto dir = testutil::temp_dir("cli_eval_perfect");
  write_text(dir / "test.csv", "s1,s2,x1,y1,y2\n0.1,0.2,1,3,4\n0.5,0.5,2,-1,0\n");
  write_text(dir / "pred.csv",
             "s1,s2,mu_y1,lo1,hi1,mu_y2,lo2,hi2,rho_1_2\n"
             "0.1,0.2,3,2,4,4,3.5,4.5,0.1\n"
             "0.5,0.5,-1,-2,0,0,-1,1,0.2\n");
  REQUIRE(run({"evaluate", "--pred", (dir / "pred.csv").string(), "--test", (dir / "test.csv").string(), "--out",
               (dir / "m.json").string()}) == kExitOk);
  const MetricsReport r = load_metrics((dir / "m.json").string());
  CHECK(r.n_test == 2);
  for (const auto& o : r.outcomes) {
    CHECK(o.rmspe == 0.0);
    CHECK(o.coverage == 1.0);
  }
  CHECK(r.outcomes[0].mean_length == 2.0);
  CHECK(r.outcomes[1].mean_length == 1.5);
}

TEST_CASE("evaluate matches a hand-computed three-row fixture") {
  const auto dir = testutil::temp_dir("cli_eval_hand");
  write_text(dir / "test.csv", "s1,s2,x1,y1,y2\n0,0,0,0,1\n0,1,0,1,2\n1,0,0,2,3\n");
  write_text(dir / "pred.csv",
             "s1,s2,mu_y1,lo1,hi1,mu_y2,lo2,hi2,rho_1_2\n"
             "0,0,0,-0.5,0.5,1,0.5,1.5,0\n"
             "0,1,2,1.5,2.5,2,1.5,2.5,0\n"
             "1,0,2,1.5,2.5,5,4.5,5.5,0\n");
  REQUIRE(run({"evaluate", "--pred", (dir / "pred.csv").string(), "--test", (dir / "test.csv").string(), "--out",
               (dir / "m.json").string(), "--fit-seconds", "2.5"}) == kExitOk);
  const MetricsReport r = load_metrics((dir / "m.json").string());
  // y1 errors (0, 1, 0): rmspe sqrt(1/3), row 2 outside its interval.
  // y2 errors (0, 0, 2): rmspe sqrt(4/3), row 3 outside its interval.
  CHECK(r.n_test == 3);
  CHECK(r.fit_seconds == 2.5);
  CHECK(r.outcomes[0].rmspe == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-15));
  CHECK(r.outcomes[0].coverage == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.outcomes[0].mean_length == 1.0);
  CHECK(r.outcomes[1].rmspe == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-15));
  CHECK(r.outcomes[1].coverage == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.outcomes[1].mean_length == 1.0);
}

TEST_CASE("evaluate rejects mismatched files") {
  const auto dir = testutil::temp_dir("cli_eval_bad");
  write_text(dir / "test.csv", "s1,s2,x1,y1,y2\n0,0,0,0,1\n0,1,0,1,2\n1,0,0,2,3\n");
  write_text(dir / "pred.csv",
             "s1,s2,mu_y1,lo1,hi1,mu_y2,lo2,hi2,rho_1_2\n"
             "0,0,0,-0.5,0.5,1,0.5,1.5,0\n"
             "0,1,2,1.5,2.5,2,1.5,2.5,0\n");
  CHECK(run({"evaluate", "--pred", (dir / "pred.csv").string(), "--test", (dir / "test.csv").string(), "--out",
             (dir / "m.json").string()}) == kExitData);
  CHECK_FALSE(fs::exists(dir / "m.json"));
  write_text(dir / "bad.csv", "s1,s2,x1,y1,y2\n0,0,0,0,1\n0,1,0,oops,2\n1,0,0,2,3\n");
  CHECK(run({"evaluate", "--pred", (dir / "pred.csv").string(), "--test", (dir / "bad.csv").string(), "--out",
             (dir / "m.json").string()}) == kExitData);
  CHECK(run({"evaluate", "--test", (dir / "test.csv").string(), "--out", (dir / "m.json").string()}) == kExitUsage);
}

}  // TEST_SUITE
