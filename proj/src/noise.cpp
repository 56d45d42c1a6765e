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

#include "onchip/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "onchip/errors.hpp"

namespace onchip::noise {

Adjacency Adjacency::from_layout(const PhaseLayout& layout) {
  std::vector<std::size_t> sizes;
  for (const PhaseBlock& b : layout.blocks()) sizes.push_back(b.size);
  return from_block_sizes(sizes);
}

Adjacency Adjacency::from_block_sizes(std::span<const std::size_t> sizes) {
  Adjacency adj;
  std::uint32_t id = 0;
  for (std::size_t size : sizes) {
    adj.block_id_.insert(adj.block_id_.end(), size, id++);
  }
  return adj;
}

Adjacency Adjacency::chain(std::size_t n) {
  const std::size_t sizes[1] = {n};
  return from_block_sizes(sizes);
}

bool Adjacency::adjacent(std::size_t i, std::size_t j) const {
  if (i >= size() || j >= size()) return false;
  const std::size_t lo = std::min(i, j);
  const std::size_t hi = std::max(i, j);
  return hi == lo + 1 && block_id_[lo] == block_id_[hi];
}

std::vector<std::size_t> Adjacency::neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  if (i > 0 && adjacent(i - 1, i)) out.push_back(i - 1);
  if (adjacent(i, i + 1)) out.push_back(i + 1);
  return out;
}

std::size_t Adjacency::max_degree() const {
  std::size_t best = 0;
  for (std::size_t i = 0; i < size(); ++i) best = std::max(best, neighbors(i).size());
  return best;
}

void NoiseSpec::validate() const {
  if (!(sigma_gamma >= 0.0) || !std::isfinite(sigma_gamma)) {
    throw ArgumentError("sigma_gamma must be finite and non-negative");
  }
  if (!(truncation > 0.0)) throw ArgumentError("truncation must be positive");
  if (!(omega >= 0.0 && omega < 1.0)) throw ArgumentError("omega must lie in [0, 1)");
}

double CrosstalkMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= size() || j >= size()) throw ArgumentError("crosstalk index out of range");
  if (i == j) return 1.0;
  for (const Entry& e : rows_[i]) {
    if (e.col == j) return e.value;
  }
  return 0.0;
}

void CrosstalkMatrix::set_off_diagonal(std::size_t i, std::size_t j, double value) {
  if (i >= size() || j >= size() || i == j) {
    throw ArgumentError("invalid off-diagonal crosstalk index");
  }
  auto& row = rows_[i];
  auto it = std::find_if(row.begin(), row.end(), [j](const Entry& e) { return e.col == j; });
  if (it != row.end()) {
    it->value = value;
  } else {
    row.push_back({j, value});
    std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
  }
}

std::size_t CrosstalkMatrix::off_diagonal_count() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

Matrix CrosstalkMatrix::dense() const {
  const auto n = static_cast<Eigen::Index>(size());
  Matrix out = Matrix::Identity(n, n);
  for (std::size_t i = 0; i < size(); ++i) {
    for (const Entry& e : rows_[i]) out(i, e.col) = e.value;
  }
  return out;
}

NoiseRealization NoiseRealization::identity(std::size_t n) {
  return NoiseRealization{std::vector<double>(n, 1.0), CrosstalkMatrix(n)};
}

std::vector<double> sample_gamma_drift(const NoiseSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ArgumentError("drift sample count must be at least 1");
  std::vector<double> gamma(n, 1.0);
  if (spec.sigma_gamma == 0.0) return gamma;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, spec.sigma_gamma);
  const double bound = spec.truncation * spec.sigma_gamma;
  for (double& g : gamma) {
    double eps = normal(rng);
    while (std::abs(eps) > bound) eps = normal(rng);
    g = 1.0 + eps;
  }
  return gamma;
}

CrosstalkMatrix build_crosstalk(const ActiveMask& mask, const NoiseSpec& spec) {
  spec.validate();
  if (spec.adjacency.size() != mask.size()) {
    throw ArgumentError(fmt::format("adjacency covers {} phases but the mask covers {}",
                                    spec.adjacency.size(), mask.size()));
  }
  CrosstalkMatrix omega(mask.size());
  if (spec.omega == 0.0) return omega;
  for (std::size_t j : mask.active()) {
    for (std::size_t i : spec.adjacency.neighbors(j)) omega.set_off_diagonal(i, j, spec.omega);
  }
  return omega;
}

double noisy_phase(std::span<const double> phases, const NoiseRealization& noise,
                   std::size_t index) {
  double value = noise.gamma[index] * phases[index];
  for (const CrosstalkMatrix::Entry& e : noise.omega.off_diagonal(index)) {
    value += e.value * noise.gamma[e.col] * phases[e.col];
  }
  return value;
}

std::vector<double> apply_noise(std::span<const double> phases, const NoiseRealization& noise) {
  if (phases.size() != noise.gamma.size() || phases.size() != noise.omega.size()) {
    throw ArgumentError(fmt::format("noise realization covers {} phases, got {}",
                                    noise.gamma.size(), phases.size()));
  }
  std::vector<double> out(phases.size());
  for (std::size_t i = 0; i < phases.size(); ++i) out[i] = noisy_phase(phases, noise, i);
  return out;
}

NoiseRealization realize(const NoiseSpec& spec, const ActiveMask& mask, std::uint64_t seed) {
  NoiseRealization out;
  out.gamma = sample_gamma_drift(spec, mask.size(), seed);
  out.omega = build_crosstalk(mask, spec);
  return out;
}

}  // namespace onchip::noise
