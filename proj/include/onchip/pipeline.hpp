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

// Experiment orchestration: pretrain -> deploy -> recover, optimizer
// comparisons and parameter sweeps, with CSV/JSON emission.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onchip/data.hpp"
#include "onchip/optim.hpp"

namespace onchip::pipeline {

struct ExperimentConfig {
  // Dataset.
  std::string dataset;               // directory (mnist), file (csv) or unused (synthetic)
  std::string dataset_kind = "mnist";  // mnist | csv | synthetic
  int image_side = 8;                // mnist only; 0 keeps the native size
  std::string label_column = "label";
  double test_fraction = 0.2;        // csv / synthetic split
  // Stage 1.
  std::string arch = "64-24-24-10";
  std::string weights;               // pretrained file; empty -> pretrain in process
  int pretrain_epochs = 60;
  double pretrain_lr = 0.1;
  int pretrain_batch = 32;
  // Stage 2.
  double sigma_bound = 3.0;
  double alpha = 0.15;
  double sigma_gamma = 2e-3;
  double omega = 2e-3;
  // Stage 3.
  std::string optimizer = "szo_scd";
  double s = 0.1;
  double p = 0.0;
  double lambda = 0.0;
  double delta_phi0 = 0.02;
  double decay = 0.985;
  int batch_size = 32;
  int epochs = 10;
  double lr = 0.0;                   // 0 -> optimizer default
  double mu = optim::kDefaultSmoothing;
  int q_samples = 60;
  double power_budget = 0.0;         // 0 -> unset
  double energy_budget = 0.0;        // 0 -> unset
  // Randomness.
  std::uint64_t seed_data = 1;
  std::uint64_t seed_mask = 2;
  std::uint64_t seed_noise = 3;
  std::uint64_t seed_optimizer = 4;
  // Output, relative to the output root.
  std::string output_dir = "runs/default";

  static const std::vector<std::string>& keys();

  // Throws ValidationError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  // Throws ValidationError listing every offending key.
  void validate() const;

  optim::TrainConfig train_config() const;
  data::DeploySettings deploy_settings() const;
  // "admm-proxy" when the power penalty is on, else the optimizer name.
  std::string label() const;
  // key=value lines in keys() order.
  std::string to_text() const;
};

// Key=value text with '#' comments. Unknown keys are collected and reported
// together in one ValidationError.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

// Environment variable naming the directory that output_dir is resolved
// against (current directory when unset).
inline constexpr const char* kOutputRootEnv = "ONCHIP_OUTPUT_ROOT";
std::filesystem::path output_root();
std::filesystem::path run_directory(const ExperimentConfig& config);

// Loaded dataset plus the stage-1 model.
struct Prepared {
  data::Dataset dataset;
  data::PretrainedModel model;
  double ideal_accuracy = 0.0;  // dense model on the test split
};

data::Dataset load_dataset(const ExperimentConfig& config);
Prepared prepare(const ExperimentConfig& config);

struct EpochRow {
  int epoch = 0;
  std::uint64_t queries_total = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double power_now = 0.0;
  double energy_total = 0.0;
  bool diverged = false;
};

struct RunResult {
  std::string label;
  std::vector<EpochRow> rows;  // rows[0] is the deployed model
  double ideal_accuracy = 0.0;
  double deployed_accuracy = 0.0;
  double best_accuracy = 0.0;
  double final_accuracy = 0.0;
  double final_power = 0.0;
  std::uint64_t queries_total = 0;
  bool diverged = false;
  std::size_t clamped = 0;
  std::size_t phase_count = 0;
  std::size_t active_count = 0;
  std::size_t budget_events = 0;
  double wall_seconds = 0.0;
};

// Deploys the prepared model and runs the configured optimizer. Divergence:
// a non-finite training loss, or one above 10x its deployed value for three
// consecutive epochs; the run stops after emitting the flagged row.
RunResult recover(const ExperimentConfig& config, const Prepared& prepared);

// Queries spent before the first row whose accuracy reaches `fraction` of
// the run's final accuracy.
std::uint64_t queries_to_fraction(const RunResult& result, double fraction);

inline constexpr const char* kCurveHeader =
    "epoch,queries_total,train_loss,test_accuracy,power_now,energy_total,diverged_flag";
std::string curve_csv(const RunResult& result);
std::string summary_json(const ExperimentConfig& config, const RunResult& result);
// Writes <dir>/curve.csv, <dir>/summary.json and <dir>/config.txt.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& config,
               const RunResult& result);

// prepare + recover + write_run.
RunResult run_pipeline(const ExperimentConfig& config);

// One run per optimizer over otherwise identical settings. Needs at least two
// distinct optimizers. Writes compare.csv plus each run's files into
// <dir>/<label>/.
inline constexpr const char* kCompareHeader =
    "optimizer,best_accuracy,final_accuracy,queries_total,final_power,diverged_flag";
std::vector<RunResult> compare_optimizers(const ExperimentConfig& base,
                                          const std::vector<std::string>& optimizers,
                                          const Prepared* prepared = nullptr);

// One run per value of `key`. Writes sweep.csv plus each run's files into
// <dir>/<key>=<value>/.
inline constexpr const char* kSweepHeader =
    "key,value,deployed_accuracy,best_accuracy,final_accuracy,queries_total,queries_to_90pct,"
    "final_power,energy_total,diverged_flag";
std::vector<RunResult> sweep(const ExperimentConfig& base, const std::string& key,
                             const std::vector<std::string>& values,
                             const Prepared* prepared = nullptr);

}  // namespace onchip::pipeline
