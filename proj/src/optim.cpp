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

#include "onchip/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "onchip/errors.hpp"
#include "onchip/mesh.hpp"

namespace onchip::optim {
namespace {

// Issues one query and books it.
class QueryScope {
 public:
  QueryScope(PhaseObjective& objective, ledger::PowerLedger& ledger, IterationStats& stats)
      : objective_(objective), ledger_(ledger), stats_(stats) {}

  double baseline() {
    ++stats_.baseline_queries;
    return run();
  }
  double coordinate() {
    ++stats_.coordinate_queries;
    return run();
  }

 private:
  double run() {
    ledger_.record_queries(1);
    return objective_.evaluate();
  }

  PhaseObjective& objective_;
  ledger::PowerLedger& ledger_;
  IterationStats& stats_;
};

void check_coords(const PhaseObjective& objective, std::span<const std::size_t> coords) {
  for (std::size_t c : coords) {
    if (c >= objective.dimension()) throw ArgumentError("coordinate index out of range");
  }
}

void ensure_adam(OptimizerState& state, std::size_t n) {
  if (state.adam_m.size() != n) {
    state.adam_m.assign(n, 0.0);
    state.adam_v.assign(n, 0.0);
    state.adam_t.assign(n, 0);
  }
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSzoScd:
      return "szo_scd";
    case OptimizerKind::kStp:
      return "stp";
    case OptimizerKind::kZooAdam:
      return "zoo_adam";
    case OptimizerKind::kZooNewton:
      return "zoo_newton";
    case OptimizerKind::kFlops:
      return "flops";
  }
  return "unknown";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view name) {
  for (OptimizerKind k : {OptimizerKind::kSzoScd, OptimizerKind::kStp, OptimizerKind::kZooAdam,
                          OptimizerKind::kZooNewton, OptimizerKind::kFlops}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

double default_learning_rate(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSzoScd:
    case OptimizerKind::kStp:
      return 2e-2;
    case OptimizerKind::kZooAdam:
    case OptimizerKind::kZooNewton:
      return 1e-3;
    case OptimizerKind::kFlops:
      return 1e-1;
  }
  return 1e-3;
}

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (!(s > 0.0 && s <= 1.0)) bad.emplace_back("s");
  if (!(p >= 0.0 && p <= 1.0)) bad.emplace_back("p");
  if (!(delta_phi0 > 0.0)) bad.emplace_back("delta_phi0");
  if (!(decay > 0.0 && decay <= 1.0)) bad.emplace_back("decay");
  if (batch_size < 1) bad.emplace_back("batch_size");
  if (epochs < 0) bad.emplace_back("epochs");
  if (!(mu > 0.0)) bad.emplace_back("mu");
  if (q_samples < 1) bad.emplace_back("q_samples");
  if (!(lambda >= 0.0)) bad.emplace_back("lambda");
  if (!std::isfinite(lr)) bad.emplace_back("lr");
  if (!bad.empty()) {
    throw ValidationError(fmt::format("invalid training settings: {}", fmt::join(bad, ", ")));
  }
}

void OnnObjective::bind(const network::Batch& batch) {
  forward_.bind(batch.inputs);
  labels_ = batch.labels;
}

double OnnObjective::evaluate() { return network::cross_entropy(forward_.logits(), labels_); }

PenalizedObjective::PenalizedObjective(PhaseObjective& inner, const ActiveMask& mask,
                                       double lambda)
    : inner_(inner), mask_(mask), lambda_(lambda) {
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be non-negative");
  if (mask.size() != inner.dimension()) throw ArgumentError("mask does not cover the objective");
}

double PenalizedObjective::evaluate() {
  const double loss = inner_.evaluate();
  if (lambda_ == 0.0) return loss;
  double power = 0.0;
  for (std::size_t i : mask_.active()) power += mesh::wrap_phase(inner_.phase(i));
  return loss + lambda_ * power;
}

double penalized_loss(double loss, std::span<const double> phases, const ActiveMask& mask,
                      double lambda) {
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be non-negative");
  if (lambda == 0.0) return loss;
  return loss + lambda * ledger::power_estimate(phases, mask);
}

ActiveMask select_active(const PhaseLayout& layout, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
  std::vector<std::uint8_t> flags(layout.total(), 0);
  std::vector<std::size_t> unitary;
  for (const PhaseBlock& b : layout.blocks()) {
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      if (b.kind == BlockKind::kSigma) {
        flags[i] = 1;
      } else {
        unitary.push_back(i);
      }
    }
  }
  const auto take = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(unitary.size())));
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, unitary.size() - 1);
    std::swap(unitary[k], unitary[pick(rng)]);
    flags[unitary[k]] = 1;
  }
  return ActiveMask(std::move(flags), alpha);
}

std::vector<std::size_t> select_coords(const ActiveMask& mask, double s, std::uint64_t seed,
                                       std::uint64_t iteration) {
  if (!(s > 0.0 && s <= 1.0)) throw ArgumentError("s must lie in (0, 1]");
  std::vector<std::size_t> pool(mask.active().begin(), mask.active().end());
  if (pool.empty()) return pool;
  const double raw = s * static_cast<double>(pool.size());
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(raw + 1e-9)));
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration),
                    static_cast<std::uint32_t>(iteration >> 32)};
  std::mt19937_64 rng(seq);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

IterationStats szo_scd_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                                 OptimizerState& state, double p, ledger::PowerLedger& ledger) {
  check_coords(objective, coords);
  if (!(state.step > 0.0)) throw ArgumentError("step size must be positive");
  IterationStats stats;
  stats.coordinates = coords.size();
  QueryScope query(objective, ledger, stats);
  std::bernoulli_distribution prune(std::clamp(p, 0.0, 1.0));

  double current = query.baseline();
  if (!std::isfinite(current)) {
    stats.diverged = true;
    return stats;
  }
  for (std::size_t c : coords) {
    const double phi = objective.phase(c);
    objective.set_phase(c, phi + state.step);
    const double forward = query.coordinate();
    if (forward < current) {
      current = forward;
      ++stats.forward_moves;
      continue;
    }
    const double backward = mesh::wrap_phase(phi - state.step);
    if (backward > phi && p > 0.0 && prune(state.rng)) {
      objective.set_phase(c, phi);
      ++stats.pruned;
      continue;
    }
    objective.set_phase(c, backward);
    ++stats.backward_moves;
    current = query.coordinate();
    if (!std::isfinite(current)) {
      stats.diverged = true;
      break;
    }
  }
  state.cached_loss = current;
  stats.loss = current;
  return stats;
}

IterationStats stp_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                             OptimizerState& state, ledger::PowerLedger& ledger) {
  check_coords(objective, coords);
  if (!(state.step > 0.0)) throw ArgumentError("step size must be positive");
  IterationStats stats;
  stats.coordinates = coords.size();
  QueryScope query(objective, ledger, stats);

  double current = query.baseline();
  if (!std::isfinite(current)) {
    stats.diverged = true;
    return stats;
  }
  for (std::size_t c : coords) {
    const double phi = objective.phase(c);
    objective.set_phase(c, phi + state.step);
    const double plus = query.coordinate();
    objective.set_phase(c, phi - state.step);
    const double minus = query.coordinate();
    // Ties keep the current phase; +delta wins over -delta on equal loss.
    double best = current;
    double choice = phi;
    int move = 0;
    if (plus < best) {
      best = plus;
      choice = phi + state.step;
      move = 1;
    }
    if (minus < best) {
      best = minus;
      choice = phi - state.step;
      move = -1;
    }
    if (move > 0) ++stats.forward_moves;
    if (move < 0) ++stats.backward_moves;
    objective.set_phase(c, choice);
    current = best;
  }
  state.cached_loss = current;
  stats.loss = current;
  return stats;
}

IterationStats zoo_adam_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                                  OptimizerState& state, double lr, double mu,
                                  ledger::PowerLedger& ledger) {
  check_coords(objective, coords);
  if (!(lr > 0.0) || !(mu > 0.0)) throw ArgumentError("lr and mu must be positive");
  ensure_adam(state, objective.dimension());
  IterationStats stats;
  stats.coordinates = coords.size();
  QueryScope query(objective, ledger, stats);

  for (std::size_t c : coords) {
    const double phi = objective.phase(c);
    objective.set_phase(c, phi + mu);
    const double plus = query.coordinate();
    objective.set_phase(c, phi - mu);
    const double minus = query.coordinate();
    objective.set_phase(c, phi);
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      stats.diverged = true;
      break;
    }
    const double g = (plus - minus) / (2.0 * mu);
    const std::uint64_t t = ++state.adam_t[c];
    double& m = state.adam_m[c];
    double& v = state.adam_v[c];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(kAdamBeta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(kAdamBeta2, static_cast<double>(t)));
    objective.set_phase(c, phi - lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon));
    stats.loss = 0.5 * (plus + minus);
  }
  return stats;
}

IterationStats zoo_newton_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                                    OptimizerState& state, double lr, double mu,
                                    ledger::PowerLedger& ledger) {
  check_coords(objective, coords);
  if (!(lr > 0.0) || !(mu > 0.0)) throw ArgumentError("lr and mu must be positive");
  (void)state;
  IterationStats stats;
  stats.coordinates = coords.size();
  QueryScope query(objective, ledger, stats);

  for (std::size_t c : coords) {
    const double phi = objective.phase(c);
    const double center = query.coordinate();
    objective.set_phase(c, phi + mu);
    const double plus = query.coordinate();
    objective.set_phase(c, phi - mu);
    const double minus = query.coordinate();
    objective.set_phase(c, phi);
    if (!std::isfinite(center) || !std::isfinite(plus) || !std::isfinite(minus)) {
      stats.diverged = true;
      break;
    }
    const double g = (plus - minus) / (2.0 * mu);
    const double h = (plus - 2.0 * center + minus) / (mu * mu);
    const double step = h > kNewtonCurvatureFloor ? lr * g / h : lr * g;
    if (!std::isfinite(step)) {
      stats.diverged = true;
      break;
    }
    objective.set_phase(c, phi - step);
    stats.loss = center;
  }
  return stats;
}

IterationStats flops_gradient_step(PhaseObjective& objective, std::span<const std::size_t> coords,
                                   OptimizerState& state, double lr, int q, double mu,
                                   ledger::PowerLedger& ledger) {
  check_coords(objective, coords);
  if (q < 1) throw ArgumentError("q must be at least 1");
  if (!(lr > 0.0) || !(mu > 0.0)) throw ArgumentError("lr and mu must be positive");
  IterationStats stats;
  stats.coordinates = coords.size();
  QueryScope query(objective, ledger, stats);

  const double base = query.baseline();
  if (!std::isfinite(base)) {
    stats.diverged = true;
    return stats;
  }
  const std::size_t n = coords.size();
  std::vector<double> origin(n);
  for (std::size_t k = 0; k < n; ++k) origin[k] = objective.phase(coords[k]);
  std::vector<double> grad(n, 0.0);
  std::vector<double> direction(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int sample = 0; sample < q; ++sample) {
    for (std::size_t k = 0; k < n; ++k) {
      direction[k] = normal(state.rng);
      objective.set_phase(coords[k], origin[k] + mu * direction[k]);
    }
    const double value = query.coordinate();
    if (!std::isfinite(value)) {
      stats.diverged = true;
      break;
    }
    const double scale = (value - base) / mu;
    for (std::size_t k = 0; k < n; ++k) grad[k] += scale * direction[k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double update = stats.diverged ? 0.0 : lr * grad[k] / static_cast<double>(q);
    objective.set_phase(coords[k], origin[k] - update);
  }
  stats.loss = base;
  return stats;
}

double step_size_update(double delta0, double decay, std::size_t epoch) {
  return delta0 * std::pow(decay, static_cast<double>(epoch));
}

IterationStats run_iteration(const TrainConfig& config, PhaseObjective& objective,
                             const ActiveMask& mask, OptimizerState& state,
                             ledger::PowerLedger& ledger) {
  const std::vector<std::size_t> coords = select_coords(mask, config.s, config.seed, state.iteration);
  ++state.iteration;
  switch (config.optimizer) {
    case OptimizerKind::kSzoScd:
      return szo_scd_iteration(objective, coords, state, config.p, ledger);
    case OptimizerKind::kStp:
      return stp_iteration(objective, coords, state, ledger);
    case OptimizerKind::kZooAdam:
      return zoo_adam_iteration(objective, coords, state, config.learning_rate(), config.mu,
                                ledger);
    case OptimizerKind::kZooNewton:
      return zoo_newton_iteration(objective, coords, state, config.learning_rate(), config.mu,
                                  ledger);
    case OptimizerKind::kFlops:
      return flops_gradient_step(objective, coords, state, config.learning_rate(),
                                 config.q_samples, config.mu, ledger);
  }
  throw ArgumentError("unknown optimizer");
}

}  // namespace onchip::optim
