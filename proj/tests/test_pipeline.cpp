// Copyright 2026 The onchip Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <doctest.h>

#include "onchip/errors.hpp"
#include "onchip/pipeline.hpp"

namespace onchip::pipeline {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Small synthetic problem that runs in well under a second.
ExperimentConfig small_config() {
  ExperimentConfig c;
  c.dataset_kind = "synthetic";
  c.arch = "8-6-4";
  c.pretrain_epochs = 60;
  c.alpha = 0.5;
  c.s = 0.3;
  c.epochs = 3;
  c.batch_size = 16;
  return c;
}

// Points the output root at a fresh temp directory for the test's lifetime.
class OutputRoot {
 public:
  OutputRoot() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("onchip_pipeline_test_" + std::to_string(rd()));
    fs::create_directories(path_);
    setenv(kOutputRootEnv, path_.c_str(), 1);
  }
  ~OutputRoot() {
    unsetenv(kOutputRootEnv);
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      "# comment line\n"
      "alpha = 0.3\n"
      "\n"
      "optimizer=stp   # trailing comment\n"
      "seed_data=17\n");
  CHECK(c.alpha == 0.3);
  CHECK(c.optimizer == "stp");
  CHECK(c.seed_data == 17);
  CHECK(c.s == 0.1);  // untouched default

  const ExperimentConfig again = parse_config(c.to_text());
  CHECK(again.to_text() == c.to_text());
  for (const std::string& key : ExperimentConfig::keys()) CHECK(again.get(key) == c.get(key));
}

TEST_CASE("unknown keys and bad values are rejected") {
  try {
    parse_config("alpha=0.2\nfoo=1\nbar=2\n");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("foo") != std::string::npos);
    CHECK(what.find("bar") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("alpha=abc\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("epochs=2.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("just words\n"), ValidationError);
}

TEST_CASE("validation names every offending key") {
  ExperimentConfig c;
  c.alpha = 5.0;
  c.p = -1.0;
  c.optimizer = "sgd";
  try {
    c.validate();
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("alpha") != std::string::npos);
    CHECK(what.find("p") != std::string::npos);
    CHECK(what.find("optimizer") != std::string::npos);
  }
  CHECK_NOTHROW(ExperimentConfig{}.validate());
}

TEST_CASE("labels and derived settings") {
  ExperimentConfig c;
  CHECK(c.label() == "szo_scd");
  c.lambda = 1e-3;
  CHECK(c.label() == "admm-proxy");
  const optim::TrainConfig t = c.train_config();
  CHECK(t.lambda == 1e-3);
  CHECK(t.seed == c.seed_optimizer);
  const data::DeploySettings d = c.deploy_settings();
  CHECK(d.alpha == c.alpha);
  CHECK(d.noise_seed == c.seed_noise);
}

TEST_CASE("output root comes from the environment") {
  OutputRoot root;
  ExperimentConfig c;
  c.output_dir = "runs/x";
  CHECK(run_directory(c) == root.path() / "runs/x");
  c.output_dir = "/abs/dir";
  CHECK(run_directory(c) == fs::path("/abs/dir"));
}

TEST_CASE("zero-epoch run writes only the deployment row") {
  OutputRoot root;
  ExperimentConfig c = small_config();
  c.epochs = 0;
  c.output_dir = "zero";
  const RunResult r = run_pipeline(c);
  CHECK(r.rows.size() == 1);
  CHECK(r.queries_total == 0);
  CHECK(r.best_accuracy == r.deployed_accuracy);
  const std::string csv = read_file(root.path() / "zero" / "curve.csv");
  CHECK(csv.rfind(std::string(kCurveHeader) + "\n0,0,", 0) == 0);
  CHECK(line_count(csv) == 2);
  CHECK(fs::exists(root.path() / "zero" / "summary.json"));
  CHECK(fs::exists(root.path() / "zero" / "config.txt"));
}

TEST_CASE("recovery runs are deterministic and well formed") {
  const ExperimentConfig c = small_config();
  const Prepared prepared = prepare(c);
  CHECK(prepared.ideal_accuracy > 0.8);
  const RunResult a = recover(c, prepared);
  const RunResult b = recover(c, prepared);
  CHECK(curve_csv(a) == curve_csv(b));
  REQUIRE(a.rows.size() == 4);
  for (std::size_t e = 1; e < a.rows.size(); ++e) {
    CHECK(a.rows[e].epoch == static_cast<int>(e));
    CHECK(a.rows[e].queries_total > a.rows[e - 1].queries_total);
    CHECK(a.rows[e].energy_total >= a.rows[e - 1].energy_total);
  }
  CHECK(a.queries_total == a.rows.back().queries_total);
  CHECK(a.final_accuracy == a.rows.back().test_accuracy);
  CHECK(a.phase_count == 6 * 5 / 2 + 6 + 8 * 7 / 2 + 4 * 3 / 2 + 4 + 6 * 5 / 2);
  CHECK_FALSE(a.diverged);

  ExperimentConfig other = c;
  other.seed_optimizer = 99;
  CHECK(curve_csv(recover(other, prepared)) != curve_csv(a));
}

TEST_CASE("queries to a fraction of the final accuracy") {
  RunResult r;
  r.rows = {{0, 0, 1.0, 0.5, 0, 0, false}, {1, 10, 1.0, 0.8, 0, 0, false},
            {2, 20, 1.0, 1.0, 0, 0, false}};
  r.final_accuracy = 1.0;
  CHECK(queries_to_fraction(r, 0.9) == 20);
  CHECK(queries_to_fraction(r, 0.8) == 10);
  CHECK(queries_to_fraction(r, 0.5) == 0);
}

TEST_CASE("compare and sweep") {
  OutputRoot root;
  ExperimentConfig c = small_config();
  c.epochs = 1;
  c.output_dir = "cmp";
  CHECK_THROWS_AS(compare_optimizers(c, {"stp"}), ValidationError);
  CHECK_THROWS_AS(compare_optimizers(c, {"stp", "stp"}), ValidationError);
  CHECK_THROWS_AS(compare_optimizers(c, {"stp", "sgd"}), ValidationError);

  const Prepared prepared = prepare(c);
  const auto results = compare_optimizers(c, {"szo_scd", "stp"}, &prepared);
  CHECK(results.size() == 2);
  const std::string table = read_file(root.path() / "cmp" / "compare.csv");
  CHECK(table.rfind(std::string(kCompareHeader) + "\nszo_scd,", 0) == 0);
  CHECK(line_count(table) == 3);
  CHECK(fs::exists(root.path() / "cmp" / "stp" / "curve.csv"));

  c.output_dir = "sw";
  sweep(c, "p", {"0", "1"}, &prepared);
  const std::string sw = read_file(root.path() / "sw" / "sweep.csv");
  CHECK(line_count(sw) == 3);
  CHECK(sw.find("\np,1,") != std::string::npos);
  CHECK(fs::exists(root.path() / "sw" / "p=0" / "summary.json"));
  CHECK_THROWS_AS(sweep(c, "nonsense", {"1"}, &prepared), ValidationError);
  CHECK_THROWS_AS(sweep(c, "alpha", {"7"}, &prepared), ValidationError);
}

}  // namespace
}  // namespace onchip::pipeline
