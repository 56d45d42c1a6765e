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

#pragma once

// Zeroth-order on-chip learning: sparse coordinate descent with power-aware
// pruning of backward steps, and the STP / ZOO-ADAM / ZOO-Newton / FLOPS
// baselines. All optimizers see the problem through PhaseObjective and only
// touch the coordinates they are handed.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "onchip/active_mask.hpp"
#include "onchip/layout.hpp"
#include "onchip/ledger.hpp"
#include "onchip/network.hpp"

namespace onchip::optim {

enum class OptimizerKind { kSzoScd, kStp, kZooAdam, kZooNewton, kFlops };

std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer(std::string_view name);

// Step sizes that work out of the box for the 64-24-24-10 MNIST setting.
double default_learning_rate(OptimizerKind kind);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
inline constexpr double kDefaultSmoothing = 1e-3;
inline constexpr double kNewtonCurvatureFloor = 1e-6;

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kSzoScd;
  double s = 0.1;             // fraction of active phases tuned per iteration
  double p = 0.0;             // power awareness
  double delta_phi0 = 0.02;   // initial coordinate step (rad)
  double decay = 0.985;       // per-epoch step multiplier
  int batch_size = 32;
  int epochs = 10;
  double lr = 0.0;            // <= 0 selects default_learning_rate(optimizer)
  double mu = kDefaultSmoothing;
  int q_samples = 60;
  double lambda = 0.0;        // power-penalty weight; 0 disables
  std::uint64_t seed = 0;

  double learning_rate() const { return lr > 0.0 ? lr : default_learning_rate(optimizer); }
  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Black-box objective over a phase vector. evaluate() is one oracle query.
class PhaseObjective {
 public:
  virtual ~PhaseObjective() = default;
  virtual std::size_t dimension() const = 0;
  virtual double phase(std::size_t index) const = 0;
  // Implementations store wrap_phase(value).
  virtual void set_phase(std::size_t index, double value) = 0;
  virtual double evaluate() = 0;
};

// Mean cross-entropy of the bound mini-batch through an incremental ONN forward.
class OnnObjective : public PhaseObjective {
 public:
  explicit OnnObjective(network::IncrementalForward& forward) : forward_(forward) {}

  void bind(const network::Batch& batch);

  std::size_t dimension() const override { return forward_.phase_count(); }
  double phase(std::size_t index) const override { return forward_.phase(index); }
  void set_phase(std::size_t index, double value) override { forward_.set_phase(index, value); }
  double evaluate() override;

 private:
  network::IncrementalForward& forward_;
  std::vector<int> labels_;
};

// inner loss + lambda * power_estimate(phases, mask).
class PenalizedObjective : public PhaseObjective {
 public:
  PenalizedObjective(PhaseObjective& inner, const ActiveMask& mask, double lambda);

  std::size_t dimension() const override { return inner_.dimension(); }
  double phase(std::size_t index) const override { return inner_.phase(index); }
  void set_phase(std::size_t index, double value) override { inner_.set_phase(index, value); }
  double evaluate() override;

 private:
  PhaseObjective& inner_;
  const ActiveMask& mask_;
  double lambda_;
};

// loss + lambda * sum over active phases of (phi mod 2*pi).
double penalized_loss(double loss, std::span<const double> phases, const ActiveMask& mask,
                      double lambda);

struct OptimizerState {
  OptimizerState(double step, std::uint64_t seed) : step(step), rng(seed) {}

  double step;                 // current coordinate step
  std::uint64_t iteration = 0;
  double cached_loss = std::numeric_limits<double>::quiet_NaN();
  // Coordinate-wise ADAM moments, sized on first use.
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::vector<std::uint64_t> adam_t;
  std::mt19937_64 rng;  // pruning draws and Gaussian directions
};

struct IterationStats {
  std::size_t coordinates = 0;
  std::uint64_t baseline_queries = 0;    // loss of the unmodified phases
  std::uint64_t coordinate_queries = 0;  // everything issued inside the sweep
  std::size_t forward_moves = 0;
  std::size_t backward_moves = 0;
  std::size_t pruned = 0;
  bool diverged = false;
  double loss = std::numeric_limits<double>::quiet_NaN();

  std::uint64_t queries() const { return baseline_queries + coordinate_queries; }
};

// All Sigma phases plus round(alpha * |U/V phases|) U/V phases drawn
// uniformly without replacement.
ActiveMask select_active(const PhaseLayout& layout, double alpha, std::uint64_t seed);

// max(1, floor(s * |active|)) distinct active indices in sampled order.
std::vector<std::size_t> select_coords(const ActiveMask& mask, double s, std::uint64_t seed,
                                       std::uint64_t iteration);

// Sparse coordinate descent sweep. Per coordinate: accept +step when it
// lowers the cached loss; otherwise take -step, except that a -step which
// wraps below zero (and so raises power) is skipped with probability p.
IterationStats szo_scd_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                                 OptimizerState& state, double p, ledger::PowerLedger& ledger);

// Stochastic three points: argmin over {phi, phi + step, phi - step}; ties
// keep phi, then prefer +step.
IterationStats stp_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                             OptimizerState& state, ledger::PowerLedger& ledger);

// Symmetric-difference gradient with a coordinate-wise ADAM update.
IterationStats zoo_adam_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                                  OptimizerState& state, double lr, double mu,
                                  ledger::PowerLedger& ledger);

// Finite-difference Newton step per coordinate, gradient step when the
// curvature estimate is below kNewtonCurvatureFloor.
IterationStats zoo_newton_iteration(PhaseObjective& objective, std::span<const std::size_t> coords,
                                    OptimizerState& state, double lr, double mu,
                                    ledger::PowerLedger& ledger);

// Two-point Gaussian-smoothing gradient estimate over `coords` with q
// directions, followed by one gradient step.
IterationStats flops_gradient_step(PhaseObjective& objective, std::span<const std::size_t> coords,
                                   OptimizerState& state, double lr, int q, double mu,
                                   ledger::PowerLedger& ledger);

// delta0 * decay^epoch.
double step_size_update(double delta0, double decay, std::size_t epoch);

// One iteration of the configured optimizer on freshly selected coordinates.
IterationStats run_iteration(const TrainConfig& config, PhaseObjective& objective,
                             const ActiveMask& mask, OptimizerState& state,
                             ledger::PowerLedger& ledger);

}  // namespace onchip::optim
