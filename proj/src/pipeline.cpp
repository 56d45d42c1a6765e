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

#include "onchip/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "onchip/errors.hpp"
#include "onchip/ledger.hpp"
#include "onchip/log.hpp"
#include "onchip/network.hpp"

#ifndef ONCHIP_DATA_DIR
#define ONCHIP_DATA_DIR "data"
#endif

namespace onchip::pipeline {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ValidationError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  return value;
}

struct Field {
  std::string name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field field(std::string name, T ExperimentConfig::*member) {
  Field f;
  f.name = name;
  f.set = [name, member](ExperimentConfig& c, std::string_view v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*member = std::string(v);
    } else {
      c.*member = parse_number<T>(name, v);
    }
  };
  f.get = [member](const ExperimentConfig& c) { return fmt::format("{}", c.*member); };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("dataset", &ExperimentConfig::dataset),
      field("dataset_kind", &ExperimentConfig::dataset_kind),
      field("image_side", &ExperimentConfig::image_side),
      field("label_column", &ExperimentConfig::label_column),
      field("test_fraction", &ExperimentConfig::test_fraction),
      field("arch", &ExperimentConfig::arch),
      field("weights", &ExperimentConfig::weights),
      field("pretrain_epochs", &ExperimentConfig::pretrain_epochs),
      field("pretrain_lr", &ExperimentConfig::pretrain_lr),
      field("pretrain_batch", &ExperimentConfig::pretrain_batch),
      field("sigma_bound", &ExperimentConfig::sigma_bound),
      field("alpha", &ExperimentConfig::alpha),
      field("sigma_gamma", &ExperimentConfig::sigma_gamma),
      field("omega", &ExperimentConfig::omega),
      field("optimizer", &ExperimentConfig::optimizer),
      field("s", &ExperimentConfig::s),
      field("p", &ExperimentConfig::p),
      field("lambda", &ExperimentConfig::lambda),
      field("delta_phi0", &ExperimentConfig::delta_phi0),
      field("decay", &ExperimentConfig::decay),
      field("batch_size", &ExperimentConfig::batch_size),
      field("epochs", &ExperimentConfig::epochs),
      field("lr", &ExperimentConfig::lr),
      field("mu", &ExperimentConfig::mu),
      field("q_samples", &ExperimentConfig::q_samples),
      field("power_budget", &ExperimentConfig::power_budget),
      field("energy_budget", &ExperimentConfig::energy_budget),
      field("seed_data", &ExperimentConfig::seed_data),
      field("seed_mask", &ExperimentConfig::seed_mask),
      field("seed_noise", &ExperimentConfig::seed_noise),
      field("seed_optimizer", &ExperimentConfig::seed_optimizer),
      field("output_dir", &ExperimentConfig::output_dir),
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const Field& f : fields()) {
    if (f.name == key) return &f;
  }
  return nullptr;
}

// Keys whose change invalidates the dataset or the pretrained model.
bool affects_preparation(std::string_view key) {
  static const std::set<std::string, std::less<>> stage1 = {
      "dataset",     "dataset_kind",    "image_side",  "label_column",   "test_fraction",
      "arch",        "weights",         "pretrain_epochs", "pretrain_lr", "pretrain_batch",
      "sigma_bound", "seed_data"};
  return stage1.count(key) > 0;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

// Mean cross-entropy and accuracy of the current phases; not counted as
// training queries.
std::pair<double, double> evaluate(const network::IncrementalForward& forward,
                                   const network::Batch& train, const network::Batch& test) {
  double loss = std::numeric_limits<double>::quiet_NaN();
  if (!train.labels.empty()) {
    loss = network::cross_entropy(network::forward(forward.model(), train.inputs, forward.noise()),
                                  train.labels);
  }
  const double acc =
      test.labels.empty() ? 0.0
                          : network::accuracy(forward.model(), test.inputs, test.labels,
                                              forward.noise());
  return {loss, acc};
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ValidationError(fmt::format("unknown key: {}", key));
  f->set(*this, trim(value));
}

std::string ExperimentConfig::get(std::string_view key) const {
  const Field* f = find_field(key);
  if (f == nullptr) throw ValidationError(fmt::format("unknown key: {}", key));
  return f->get(*this);
}

void ExperimentConfig::validate() const {
  std::vector<std::string> bad;
  auto require = [&bad](bool ok, const char* key) {
    if (!ok) bad.emplace_back(key);
  };
  require(dataset_kind == "mnist" || dataset_kind == "csv" || dataset_kind == "synthetic",
          "dataset_kind");
  require(image_side >= 0, "image_side");
  require(test_fraction >= 0.0 && test_fraction < 1.0, "test_fraction");
  try {
    data::parse_arch(arch);
  } catch (const ArgumentError&) {
    bad.emplace_back("arch");
  }
  require(pretrain_epochs >= 0, "pretrain_epochs");
  require(pretrain_lr >= 0.0 && std::isfinite(pretrain_lr), "pretrain_lr");
  require(pretrain_batch >= 1, "pretrain_batch");
  require(sigma_bound > 0.0 && std::isfinite(sigma_bound), "sigma_bound");
  require(alpha > 0.0 && alpha <= 1.0, "alpha");
  require(sigma_gamma >= 0.0 && std::isfinite(sigma_gamma), "sigma_gamma");
  require(omega >= 0.0 && omega < 1.0, "omega");
  require(optim::parse_optimizer(optimizer).has_value(), "optimizer");
  require(s > 0.0 && s <= 1.0, "s");
  require(p >= 0.0 && p <= 1.0, "p");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda");
  require(delta_phi0 > 0.0 && std::isfinite(delta_phi0), "delta_phi0");
  require(decay > 0.0 && decay <= 1.0, "decay");
  require(batch_size >= 1, "batch_size");
  require(epochs >= 0, "epochs");
  require(lr >= 0.0 && std::isfinite(lr), "lr");
  require(mu > 0.0 && std::isfinite(mu), "mu");
  require(q_samples >= 1, "q_samples");
  require(power_budget >= 0.0, "power_budget");
  require(energy_budget >= 0.0, "energy_budget");
  require(!output_dir.empty(), "output_dir");
  if (!bad.empty()) {
    throw ValidationError(fmt::format("invalid value for: {}", fmt::join(bad, ", ")));
  }
}

optim::TrainConfig ExperimentConfig::train_config() const {
  optim::TrainConfig t;
  t.optimizer = optim::parse_optimizer(optimizer).value_or(optim::OptimizerKind::kSzoScd);
  t.s = s;
  t.p = p;
  t.delta_phi0 = delta_phi0;
  t.decay = decay;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.lr = lr;
  t.mu = mu;
  t.q_samples = q_samples;
  t.lambda = lambda;
  t.seed = seed_optimizer;
  return t;
}

data::DeploySettings ExperimentConfig::deploy_settings() const {
  data::DeploySettings d;
  d.sigma_bound = sigma_bound;
  d.sigma_gamma = sigma_gamma;
  d.omega = omega;
  d.alpha = alpha;
  d.mask_seed = seed_mask;
  d.noise_seed = seed_noise;
  return d;
}

std::string ExperimentConfig::label() const { return lambda > 0.0 ? "admm-proxy" : optimizer; }

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += fmt::format("{}={}\n", f.name, f.get(*this));
  return out;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::vector<std::string> unknown;
  std::vector<std::string> malformed;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const std::size_t hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    const std::size_t eq = view.find('=');
    if (eq == std::string_view::npos) {
      malformed.push_back(fmt::format("line {}", line_no));
      continue;
    }
    const std::string_view key = trim(view.substr(0, eq));
    if (find_field(key) == nullptr) {
      unknown.emplace_back(key);
      continue;
    }
    base.set(key, view.substr(eq + 1));
  }
  if (!unknown.empty() || !malformed.empty()) {
    std::vector<std::string> parts;
    if (!unknown.empty()) parts.push_back(fmt::format("unknown keys: {}", fmt::join(unknown, ", ")));
    if (!malformed.empty()) {
      parts.push_back(fmt::format("missing '=' on {}", fmt::join(malformed, ", ")));
    }
    throw ValidationError(fmt::format("{}", fmt::join(parts, "; ")));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), std::move(base));
}

std::filesystem::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return (env != nullptr && *env != '\0') ? std::filesystem::path(env)
                                          : std::filesystem::current_path();
}

std::filesystem::path run_directory(const ExperimentConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  return dir.is_absolute() ? dir : output_root() / dir;
}

data::Dataset load_dataset(const ExperimentConfig& config) {
  if (config.dataset_kind == "mnist") {
    const std::filesystem::path dir =
        config.dataset.empty() ? std::filesystem::path(ONCHIP_DATA_DIR) / "mnist"
                               : std::filesystem::path(config.dataset);
    data::Dataset ds = data::load_mnist(dir);
    if (config.image_side > 0 && config.image_side != ds.image_side) {
      ds = data::downsample(ds, config.image_side);
    }
    return ds;
  }
  if (config.dataset_kind == "csv") {
    if (config.dataset.empty()) throw ValidationError("dataset: csv path required");
    data::CsvSchema schema;
    schema.label_column = config.label_column;
    schema.test_fraction = config.test_fraction;
    schema.split_seed = config.seed_data;
    return data::load_csv(config.dataset, schema);
  }
  const std::vector<int> widths = data::parse_arch(config.arch);
  data::ClusterSpec spec;
  spec.features = widths.front();
  spec.classes = widths.back();
  spec.test_fraction = config.test_fraction;
  spec.seed = config.seed_data;
  return data::synthetic_clusters(spec);
}

Prepared prepare(const ExperimentConfig& config) {
  config.validate();
  Prepared out;
  out.dataset = load_dataset(config);
  out.dataset.check();
  if (!config.weights.empty()) {
    out.model = data::load_pretrained(config.weights);
    if (out.model.arch != config.arch) {
      throw ValidationError(fmt::format("weights: file holds arch {}, config asks for {}",
                                        out.model.arch, config.arch));
    }
  } else {
    data::PretrainConfig pc;
    pc.epochs = config.pretrain_epochs;
    pc.lr = config.pretrain_lr;
    pc.batch_size = config.pretrain_batch;
    pc.seed = config.seed_data;
    // Keep the spectrum inside the Sigma range so deployment needs no clamping.
    pc.sigma_cap = config.sigma_bound * (1.0 - 1e-3);
    out.model = data::pretrain_mlp(out.dataset, data::parse_arch(config.arch), pc);
  }
  if (out.model.weights.front().cols() != static_cast<Eigen::Index>(out.dataset.feature_count())) {
    throw ValidationError("arch: input width does not match the dataset");
  }
  out.ideal_accuracy = data::dense_accuracy(out.model, out.dataset, out.dataset.test);
  return out;
}

RunResult recover(const ExperimentConfig& config, const Prepared& prepared) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const optim::TrainConfig tc = config.train_config();
  tc.validate();

  data::DeployedOnn deployed = data::deploy(prepared.model, config.deploy_settings());
  RunResult result;
  result.label = config.label();
  result.ideal_accuracy = prepared.ideal_accuracy;
  result.clamped = deployed.clamped;
  result.phase_count = deployed.model.phase_count();
  result.active_count = deployed.mask.active().size();

  network::IncrementalForward forward(std::move(deployed.model), std::move(deployed.noise));
  optim::OnnObjective onn(forward);
  optim::PenalizedObjective penalized(onn, deployed.mask, config.lambda);
  optim::PhaseObjective& objective =
      config.lambda > 0.0 ? static_cast<optim::PhaseObjective&>(penalized) : onn;

  const auto budget = [](double v) { return v > 0.0 ? std::optional<double>(v) : std::nullopt; };
  ledger::PowerLedger ledger(budget(config.power_budget), budget(config.energy_budget));
  optim::OptimizerState state(config.delta_phi0, config.seed_optimizer);

  const network::Batch train = data::gather(prepared.dataset, prepared.dataset.train);
  const network::Batch test = data::gather(prepared.dataset, prepared.dataset.test);

  ledger.observe(forward.model().phases(), deployed.mask);
  auto [loss0, acc0] = evaluate(forward, train, test);
  result.rows.push_back({0, 0, loss0, acc0, ledger.power_now(), 0.0, !std::isfinite(loss0)});
  result.deployed_accuracy = acc0;

  std::vector<std::size_t> order = prepared.dataset.train;
  std::mt19937_64 shuffle_rng(config.seed_data ^ 0x5851f42d4c957f2dULL);
  int over_limit = 0;
  bool diverged = result.rows[0].diverged;
  for (int epoch = 1; epoch <= config.epochs && !diverged; ++epoch) {
    state.step = optim::step_size_update(config.delta_phi0, config.decay,
                                         static_cast<std::size_t>(epoch - 1));
    for (std::size_t k = order.size(); k > 1; --k) {
      std::uniform_int_distribution<std::size_t> pick(0, k - 1);
      std::swap(order[k - 1], order[pick(shuffle_rng)]);
    }
    bool nonfinite = false;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
      onn.bind(data::gather(prepared.dataset,
                            std::span<const std::size_t>(order).subspan(at, stop - at)));
      const optim::IterationStats stats =
          optim::run_iteration(tc, objective, deployed.mask, state, ledger);
      ledger.record_iteration(forward.model().phases(), deployed.mask);
      if (stats.diverged) {
        nonfinite = true;
        break;
      }
    }
    auto [loss, acc] = evaluate(forward, train, test);
    if (nonfinite || !std::isfinite(loss)) {
      diverged = true;
    } else if (loss > 10.0 * loss0) {
      diverged = ++over_limit >= 3;
    } else {
      over_limit = 0;
    }
    result.rows.push_back({epoch, ledger.queries_total(), loss, acc, ledger.power_now(),
                           ledger.energy_total(), diverged});
    if (diverged) log_warning(fmt::format("{}: diverged at epoch {}", result.label, epoch));
  }

  result.diverged = diverged;
  result.final_accuracy = result.rows.back().test_accuracy;
  // Best over the recovery epochs; the deployment row only counts for a
  // zero-epoch run.
  const std::size_t first = result.rows.size() > 1 ? 1 : 0;
  result.best_accuracy = result.rows[first].test_accuracy;
  for (std::size_t e = first; e < result.rows.size(); ++e) {
    result.best_accuracy = std::max(result.best_accuracy, result.rows[e].test_accuracy);
  }
  result.final_power = result.rows.back().power_now;
  result.queries_total = ledger.queries_total();
  result.budget_events = ledger.events().size();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::uint64_t queries_to_fraction(const RunResult& result, double fraction) {
  const double target = fraction * result.final_accuracy;
  for (const EpochRow& r : result.rows) {
    if (r.test_accuracy >= target) return r.queries_total;
  }
  return result.queries_total;
}

std::string curve_csv(const RunResult& result) {
  std::string out = std::string(kCurveHeader) + "\n";
  for (const EpochRow& r : result.rows) {
    out += fmt::format("{},{},{:.9f},{:.6f},{:.9f},{:.9f},{}\n", r.epoch, r.queries_total,
                       r.train_loss, r.test_accuracy, r.power_now, r.energy_total,
                       r.diverged ? 1 : 0);
  }
  return out;
}

std::string summary_json(const ExperimentConfig& config, const RunResult& result) {
  nlohmann::ordered_json j;
  j["label"] = result.label;
  j["optimizer"] = config.optimizer;
  j["arch"] = config.arch;
  j["alpha"] = config.alpha;
  j["s"] = config.s;
  j["p"] = config.p;
  j["lambda"] = config.lambda;
  j["epochs"] = config.epochs;
  j["phase_count"] = result.phase_count;
  j["active_count"] = result.active_count;
  j["clamped_singular_values"] = result.clamped;
  j["ideal_accuracy"] = result.ideal_accuracy;
  j["deployed_accuracy"] = result.deployed_accuracy;
  j["best_accuracy"] = result.best_accuracy;
  j["final_accuracy"] = result.final_accuracy;
  j["final_power"] = result.final_power;
  j["energy_total"] = result.rows.back().energy_total;
  j["queries_total"] = result.queries_total;
  j["queries_to_90pct"] = queries_to_fraction(result, 0.9);
  j["budget_events"] = result.budget_events;
  j["diverged"] = result.diverged;
  j["wall_seconds"] = result.wall_seconds;
  return j.dump(2) + "\n";
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& config,
               const RunResult& result) {
  make_dirs(dir);
  write_text(dir / "curve.csv", curve_csv(result));
  write_text(dir / "summary.json", summary_json(config, result));
  write_text(dir / "config.txt", config.to_text());
}

RunResult run_pipeline(const ExperimentConfig& config) {
  const Prepared prepared = prepare(config);
  RunResult result = recover(config, prepared);
  write_run(run_directory(config), config, result);
  return result;
}

std::vector<RunResult> compare_optimizers(const ExperimentConfig& base,
                                          const std::vector<std::string>& optimizers,
                                          const Prepared* prepared) {
  const std::set<std::string> distinct(optimizers.begin(), optimizers.end());
  if (distinct.size() < 2 || distinct.size() != optimizers.size()) {
    throw ValidationError("optimizer: compare needs at least two distinct optimizers");
  }
  for (const std::string& name : optimizers) {
    if (!optim::parse_optimizer(name)) throw ValidationError(fmt::format("optimizer: unknown '{}'", name));
  }
  base.validate();
  std::optional<Prepared> own;
  if (prepared == nullptr) {
    own = prepare(base);
    prepared = &*own;
  }
  const std::filesystem::path dir = run_directory(base);
  std::string table = std::string(kCompareHeader) + "\n";
  std::vector<RunResult> results;
  for (const std::string& name : optimizers) {
    ExperimentConfig config = base;
    config.optimizer = name;
    RunResult r = recover(config, *prepared);
    write_run(dir / r.label, config, r);
    table += fmt::format("{},{:.6f},{:.6f},{},{:.9f},{}\n", r.label, r.best_accuracy,
                         r.final_accuracy, r.queries_total, r.final_power, r.diverged ? 1 : 0);
    results.push_back(std::move(r));
  }
  make_dirs(dir);
  write_text(dir / "compare.csv", table);
  return results;
}

std::vector<RunResult> sweep(const ExperimentConfig& base, const std::string& key,
                             const std::vector<std::string>& values, const Prepared* prepared) {
  if (find_field(key) == nullptr) throw ValidationError(fmt::format("unknown key: {}", key));
  if (key == "output_dir") throw ValidationError("output_dir cannot be swept");
  if (values.empty()) throw ValidationError(fmt::format("{}: no sweep values", key));
  std::vector<ExperimentConfig> configs;
  for (const std::string& v : values) {
    ExperimentConfig c = base;
    c.set(key, v);
    c.validate();
    configs.push_back(std::move(c));
  }
  const bool shared = !affects_preparation(key);
  std::optional<Prepared> own;
  if (shared && prepared == nullptr) {
    own = prepare(base);
    prepared = &*own;
  }
  const std::filesystem::path dir = run_directory(base);
  std::string table = std::string(kSweepHeader) + "\n";
  std::vector<RunResult> results;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const ExperimentConfig& config = configs[k];
    RunResult r = shared ? recover(config, *prepared) : recover(config, prepare(config));
    write_run(dir / fmt::format("{}={}", key, values[k]), config, r);
    table += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{},{},{:.9f},{:.9f},{}\n", key, values[k],
                         r.deployed_accuracy, r.best_accuracy, r.final_accuracy, r.queries_total,
                         queries_to_fraction(r, 0.9), r.final_power, r.rows.back().energy_total,
                         r.diverged ? 1 : 0);
    results.push_back(std::move(r));
  }
  make_dirs(dir);
  write_text(dir / "sweep.csv", table);
  return results;
}

}  // namespace onchip::pipeline
