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

// onchip: command-line driver for the mixed-training ONN pipeline.
//
//   onchip pretrain|deploy|recover|compare|sweep [--config FILE] [--KEY VALUE]...
//
// Settings resolve as defaults < config file < flags. Outputs land in
// $ONCHIP_OUTPUT_ROOT/<output_dir> (current directory when unset).
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration or
// arguments, 3 I/O failure, 4 malformed input file, 5 training diverged
// (recover only; compare and sweep report divergence in their tables).

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "onchip/data.hpp"
#include "onchip/errors.hpp"
#include "onchip/log.hpp"
#include "onchip/pipeline.hpp"

namespace {

using onchip::pipeline::ExperimentConfig;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kFormat = 4, kDiverged = 5 };

struct Common {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool quiet = false;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "key=value settings file");
  cmd->add_flag("--quiet", common.quiet, "suppress warnings");
  cmd->add_flag("--verbose", common.verbose, "progress messages");
  for (const std::string& key : ExperimentConfig::keys()) {
    cmd->add_option("--" + key, common.overrides[key], "overrides " + key);
  }
}

ExperimentConfig resolve(const CLI::App* cmd, const Common& common) {
  ExperimentConfig config;
  if (!common.config_path.empty()) config = onchip::pipeline::load_config(common.config_path);
  for (const std::string& key : ExperimentConfig::keys()) {
    if (cmd->count("--" + key) > 0) config.set(key, common.overrides.at(key));
  }
  onchip::set_log_level(common.quiet     ? onchip::LogLevel::kQuiet
                        : common.verbose ? onchip::LogLevel::kInfo
                                         : onchip::LogLevel::kWarning);
  config.validate();
  return config;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = text.find(',', start);
    std::string item = text.substr(start, comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void print_run(const onchip::pipeline::RunResult& r) {
  fmt::print("{}: ideal {:.4f} deployed {:.4f} best {:.4f} final {:.4f} queries {} power {:.3f}{}\n",
             r.label, r.ideal_accuracy, r.deployed_accuracy, r.best_accuracy, r.final_accuracy,
             r.queries_total, r.final_power, r.diverged ? " DIVERGED" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-training simulator for MZI-mesh optical neural networks"};
  app.require_subcommand(1);

  Common common;
  CLI::App* pretrain = app.add_subcommand("pretrain", "train the dense model and save its weights");
  CLI::App* deploy = app.add_subcommand("deploy", "map onto meshes and report deployed accuracy");
  CLI::App* recover = app.add_subcommand("recover", "deploy, then train on chip");
  CLI::App* compare = app.add_subcommand("compare", "recover once per optimizer");
  CLI::App* sweep = app.add_subcommand("sweep", "recover once per value of one key");
  for (CLI::App* cmd : {pretrain, deploy, recover, compare, sweep}) add_common(cmd, common);

  std::string optimizers = "szo_scd,stp,zoo_adam,zoo_newton,flops";
  compare->add_option("--optimizers", optimizers, "comma-separated optimizer names");
  std::string sweep_key;
  std::string sweep_values;
  sweep->add_option("--key", sweep_key, "setting to vary")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    namespace pl = onchip::pipeline;
    if (pretrain->parsed()) {
      const ExperimentConfig config = resolve(pretrain, common);
      const pl::Prepared prepared = pl::prepare(config);
      const auto dir = pl::run_directory(config);
      std::filesystem::create_directories(dir);
      onchip::data::save_pretrained(prepared.model, dir / "pretrained.bin");
      fmt::print("{}: ideal test accuracy {:.4f}; weights in {}\n", prepared.model.arch,
                 prepared.ideal_accuracy, (dir / "pretrained.bin").string());
      return kOk;
    }
    if (deploy->parsed()) {
      ExperimentConfig config = resolve(deploy, common);
      config.epochs = 0;
      print_run(pl::run_pipeline(config));
      return kOk;
    }
    if (recover->parsed()) {
      const pl::RunResult r = pl::run_pipeline(resolve(recover, common));
      print_run(r);
      return r.diverged ? kDiverged : kOk;
    }
    if (compare->parsed()) {
      const ExperimentConfig config = resolve(compare, common);
      for (const auto& r : pl::compare_optimizers(config, split_list(optimizers))) print_run(r);
      return kOk;
    }
    if (sweep->parsed()) {
      const ExperimentConfig config = resolve(sweep, common);
      for (const auto& r : pl::sweep(config, sweep_key, split_list(sweep_values))) print_run(r);
      return kOk;
    }
  } catch (const onchip::ValidationError& e) {
    fmt::print(stderr, "onchip: {}\n", e.what());
    return kConfig;
  } catch (const onchip::ArgumentError& e) {
    fmt::print(stderr, "onchip: {}\n", e.what());
    return kConfig;
  } catch (const onchip::IoError& e) {
    fmt::print(stderr, "onchip: {}\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "onchip: {}\n", e.what());
    return kIo;
  } catch (const onchip::FormatError& e) {
    fmt::print(stderr, "onchip: {} (at {})\n", e.what(), e.location());
    return kFormat;
  } catch (const std::exception& e) {
    fmt::print(stderr, "onchip: {}\n", e.what());
    return kFailure;
  }
  return kFailure;
}
