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

// Device non-idealities acting on a phase program: multiplicative drift of
// the phase-shifter coefficient (Gamma) and thermal crosstalk from active
// neighbours (Omega). The physical phases are Omega * Gamma * phi.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "onchip/active_mask.hpp"
#include "onchip/layout.hpp"
#include "onchip/linalg.hpp"

namespace onchip::noise {

// Two phases are adjacent iff they are consecutive indices inside the same
// block (one U, Sigma or V vector of one layer).
class Adjacency {
 public:
  Adjacency() = default;
  static Adjacency from_layout(const PhaseLayout& layout);
  static Adjacency from_block_sizes(std::span<const std::size_t> sizes);
  // A single block of n phases.
  static Adjacency chain(std::size_t n);

  std::size_t size() const { return block_id_.size(); }
  bool adjacent(std::size_t i, std::size_t j) const;
  std::vector<std::size_t> neighbors(std::size_t i) const;
  std::size_t max_degree() const;

 private:
  std::vector<std::uint32_t> block_id_;
};

struct NoiseSpec {
  double sigma_gamma = 0.0;  // std of the relative drift
  double truncation = 3.0;   // drift is truncated at +-truncation * sigma_gamma
  double omega = 0.0;        // mutual coupling of adjacent active devices
  Adjacency adjacency;

  // Throws ArgumentError unless sigma_gamma >= 0, truncation > 0, 0 <= omega < 1.
  void validate() const;
};

// Omega: unit diagonal plus sparse off-diagonal couplings.
class CrosstalkMatrix {
 public:
  struct Entry {
    std::size_t col;
    double value;
  };

  explicit CrosstalkMatrix(std::size_t n = 0) : rows_(n) {}

  std::size_t size() const { return rows_.size(); }
  double at(std::size_t i, std::size_t j) const;
  std::span<const Entry> off_diagonal(std::size_t row) const { return rows_[row]; }
  void set_off_diagonal(std::size_t i, std::size_t j, double value);
  std::size_t off_diagonal_count() const;
  Matrix dense() const;

 private:
  std::vector<std::vector<Entry>> rows_;
};

struct NoiseRealization {
  std::vector<double> gamma;  // diagonal of Gamma
  CrosstalkMatrix omega;

  static NoiseRealization identity(std::size_t n);
  std::size_t size() const { return gamma.size(); }
};

// 1 + eps_i with eps_i ~ N(0, sigma^2) truncated by rejection at
// +-truncation * sigma. Deterministic for a fixed seed.
std::vector<double> sample_gamma_drift(const NoiseSpec& spec, std::size_t n, std::uint64_t seed);

// Omega[i][j] = omega iff i != j, j is active and j is adjacent to i.
CrosstalkMatrix build_crosstalk(const ActiveMask& mask, const NoiseSpec& spec);

// Omega * (Gamma * phi). Not wrapped.
std::vector<double> apply_noise(std::span<const double> phases, const NoiseRealization& noise);

// Entry `index` of apply_noise(phases, noise).
double noisy_phase(std::span<const double> phases, const NoiseRealization& noise,
                   std::size_t index);

// One frozen realization: Gamma drawn from `seed`, Omega from the mask.
NoiseRealization realize(const NoiseSpec& spec, const ActiveMask& mask, std::uint64_t seed);

}  // namespace onchip::noise
