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

// Power, energy and query bookkeeping for an on-chip training run. Power is
// the summed (wrapped) phase of active devices; energy integrates power with
// one optimizer iteration as the time step.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "onchip/active_mask.hpp"

namespace onchip::ledger {

// Sum over active indices of (phi mod 2*pi). Passive devices draw nothing.
double power_estimate(std::span<const double> phases, const ActiveMask& mask);

enum class BudgetKind { kPower, kEnergy };

struct BudgetEvent {
  BudgetKind kind;
  std::size_t iteration;  // 1-based iteration that crossed the budget
  double value;
  double budget;
};

class PowerLedger {
 public:
  PowerLedger() = default;
  PowerLedger(std::optional<double> power_budget, std::optional<double> energy_budget);

  double power_now() const { return power_now_; }
  double energy_total() const { return energy_total_; }
  std::uint64_t queries_total() const { return queries_total_; }
  std::size_t iterations() const { return iterations_; }
  const std::vector<BudgetEvent>& events() const { return events_; }

  void record_queries(std::uint64_t n = 1) { queries_total_ += n; }

  // Refreshes power_now without advancing time.
  void observe(std::span<const double> phases, const ActiveMask& mask);

  // Refreshes power_now, adds it to the energy total and checks budgets.
  // Violations are logged and returned; the run is not interrupted.
  std::vector<BudgetEvent> record_iteration(std::span<const double> phases,
                                            const ActiveMask& mask);

 private:
  std::optional<double> power_budget_;
  std::optional<double> energy_budget_;
  double power_now_ = 0.0;
  double energy_total_ = 0.0;
  std::uint64_t queries_total_ = 0;
  std::size_t iterations_ = 0;
  std::vector<BudgetEvent> events_;
  std::size_t last_violation_[2] = {0, 0};
};

}  // namespace onchip::ledger
