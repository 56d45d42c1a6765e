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

#include "onchip/ledger.hpp"

#include <fmt/format.h>

#include "onchip/errors.hpp"
#include "onchip/log.hpp"
#include "onchip/mesh.hpp"

namespace onchip::ledger {

double power_estimate(std::span<const double> phases, const ActiveMask& mask) {
  if (phases.size() != mask.size()) {
    throw ArgumentError(fmt::format("mask covers {} phases, got {}", mask.size(), phases.size()));
  }
  double total = 0.0;
  for (std::size_t i : mask.active()) total += mesh::wrap_phase(phases[i]);
  return total;
}

PowerLedger::PowerLedger(std::optional<double> power_budget, std::optional<double> energy_budget)
    : power_budget_(power_budget), energy_budget_(energy_budget) {}

void PowerLedger::observe(std::span<const double> phases, const ActiveMask& mask) {
  power_now_ = power_estimate(phases, mask);
}

std::vector<BudgetEvent> PowerLedger::record_iteration(std::span<const double> phases,
                                                       const ActiveMask& mask) {
  observe(phases, mask);
  energy_total_ += power_now_;
  ++iterations_;
  std::vector<BudgetEvent> fired;
  if (power_budget_ && power_now_ > *power_budget_) {
    fired.push_back({BudgetKind::kPower, iterations_, power_now_, *power_budget_});
  }
  if (energy_budget_ && energy_total_ > *energy_budget_) {
    fired.push_back({BudgetKind::kEnergy, iterations_, energy_total_, *energy_budget_});
  }
  for (const BudgetEvent& e : fired) {
    // Log only the first iteration of each continuous violation.
    std::size_t& last = last_violation_[static_cast<int>(e.kind)];
    if (last + 1 != e.iteration) {
      log_warning(fmt::format("iteration {}: {} {:.4f} exceeds budget {:.4f}", e.iteration,
                              e.kind == BudgetKind::kPower ? "power" : "energy", e.value,
                              e.budget));
    }
    last = e.iteration;
    events_.push_back(e);
  }
  return fired;
}

}  // namespace onchip::ledger
