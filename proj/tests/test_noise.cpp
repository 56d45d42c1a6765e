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

#include <cmath>
#include <random>

#include <doctest.h>

#include "onchip/errors.hpp"
#include "onchip/noise.hpp"

namespace onchip::noise {
namespace {

ActiveMask mask_of(std::vector<std::uint8_t> flags) { return ActiveMask(std::move(flags), 0.5); }

NoiseSpec chain_spec(std::size_t n, double sigma, double omega) {
  NoiseSpec s;
  s.sigma_gamma = sigma;
  s.omega = omega;
  s.adjacency = Adjacency::chain(n);
  return s;
}

TEST_CASE("adjacency stays inside blocks") {
  const std::vector<std::size_t> sizes = {3, 1, 2};
  const Adjacency a = Adjacency::from_block_sizes(sizes);
  CHECK(a.size() == 6);
  CHECK(a.adjacent(0, 1));
  CHECK(a.adjacent(2, 1));
  CHECK_FALSE(a.adjacent(2, 3));  // block boundary
  CHECK_FALSE(a.adjacent(3, 4));
  CHECK(a.adjacent(4, 5));
  CHECK_FALSE(a.adjacent(0, 2));
  CHECK(a.neighbors(1) == std::vector<std::size_t>{0, 2});
  CHECK(a.neighbors(3).empty());
  CHECK(a.max_degree() == 2);
}

TEST_CASE("gamma drift sampling") {
  const NoiseSpec zero = chain_spec(10, 0.0, 0.0);
  for (double g : sample_gamma_drift(zero, 10, 1)) CHECK(g == 1.0);

  const NoiseSpec s = chain_spec(0, 2e-3, 0.0);
  const std::vector<double> g = sample_gamma_drift(s, 20000, 9);
  double sum = 0.0;
  double sq = 0.0;
  for (double v : g) {
    CHECK(v >= 1.0 - 6e-3);
    CHECK(v <= 1.0 + 6e-3);
    sum += v - 1.0;
    sq += (v - 1.0) * (v - 1.0);
  }
  // A Gaussian truncated at 3 sigma keeps about 98.7% of its variance.
  const double sd = std::sqrt(sq / g.size());
  CHECK(sd == doctest::Approx(2e-3 * std::sqrt(0.9733)).epsilon(0.03));
  CHECK(std::abs(sum / g.size()) < 5e-5);
  CHECK(sample_gamma_drift(s, 50, 4) == sample_gamma_drift(s, 50, 4));
  CHECK(sample_gamma_drift(s, 50, 4) != sample_gamma_drift(s, 50, 5));
  CHECK_THROWS_AS(sample_gamma_drift(s, 0, 1), ArgumentError);

  NoiseSpec bad = s;
  bad.omega = 1.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad.omega = 0.0;
  bad.sigma_gamma = -1e-3;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("crosstalk matrix") {
  SUBCASE("all passive gives identity") {
    const CrosstalkMatrix o = build_crosstalk(ActiveMask::all_passive(5), chain_spec(5, 0, 2e-3));
    CHECK(o.off_diagonal_count() == 0);
    CHECK((o.dense() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("only active columns couple") {
    const CrosstalkMatrix o = build_crosstalk(mask_of({0, 1}), chain_spec(2, 0, 2e-3));
    CHECK(o.at(0, 1) == 2e-3);
    CHECK(o.at(1, 0) == 0.0);
    CHECK(o.at(0, 0) == 1.0);
    CHECK(o.at(1, 1) == 1.0);
    const CrosstalkMatrix both = build_crosstalk(mask_of({1, 1}), chain_spec(2, 0, 2e-3));
    CHECK(both.at(1, 0) == 2e-3);
  }
  SUBCASE("zero coupling") {
    const CrosstalkMatrix o = build_crosstalk(ActiveMask::all_active(6), chain_spec(6, 0, 0.0));
    CHECK(o.off_diagonal_count() == 0);
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(build_crosstalk(ActiveMask::all_active(3), chain_spec(4, 0, 1e-3)),
                    ArgumentError);
  }
}

TEST_CASE("apply_noise examples") {
  const std::vector<double> phases = {1.0, 2.0};
  NoiseRealization id = NoiseRealization::identity(2);
  CHECK(apply_noise(phases, id) == phases);

  NoiseRealization g = NoiseRealization::identity(2);
  g.gamma[0] = 1.002;
  CHECK(apply_noise(phases, g)[0] == doctest::Approx(1.002));

  NoiseRealization o = NoiseRealization::identity(2);
  o.omega.set_off_diagonal(0, 1, 0.002);
  CHECK(apply_noise(phases, o)[0] == doctest::Approx(1.004));
  CHECK(apply_noise(phases, o)[1] == 2.0);

  CHECK_THROWS_AS(apply_noise(std::vector<double>{1.0}, id), ArgumentError);
}

TEST_CASE("noise matches the dense matrix product and its bound") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> phase(0.0, 6.28);
  std::bernoulli_distribution coin(0.3);
  const std::vector<std::size_t> sizes = {7, 3, 10};
  NoiseSpec spec;
  spec.sigma_gamma = 2e-3;
  spec.omega = 2e-3;
  spec.adjacency = Adjacency::from_block_sizes(sizes);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> flags(20);
    for (auto& f : flags) f = coin(rng);
    const ActiveMask mask(flags, 0.3);
    const NoiseRealization n = realize(spec, mask, static_cast<std::uint64_t>(trial));
    Eigen::VectorXd phi(20);
    for (Eigen::Index i = 0; i < 20; ++i) phi(i) = phase(rng);
    Matrix gamma = Matrix::Zero(20, 20);
    double max_eps = 0.0;
    for (int i = 0; i < 20; ++i) {
      gamma(i, i) = n.gamma[i];
      max_eps = std::max(max_eps, std::abs(n.gamma[i] - 1.0));
    }
    const Eigen::VectorXd expected = n.omega.dense() * gamma * phi;
    const std::vector<double> got =
        apply_noise(std::vector<double>(phi.data(), phi.data() + 20), n);
    double dev = 0.0;
    double max_v = 0.0;
    for (int i = 0; i < 20; ++i) {
      CHECK(std::abs(got[i] - expected(i)) < 1e-14);
      dev = std::max(dev, std::abs(got[i] - phi(i)));
      max_v = std::max(max_v, std::abs(n.gamma[i] * phi(i)));
    }
    CHECK(dev <= max_eps * 6.28 + spec.omega * spec.adjacency.max_degree() * max_v + 1e-15);
  }
}

TEST_CASE("passive phases never act as aggressors") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> phase(0.0, 6.28);
  NoiseSpec spec = chain_spec(30, 2e-3, 5e-2);
  std::vector<std::uint8_t> flags(30);
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = (i % 3 == 0);
  const ActiveMask mask(flags, 1.0 / 3);
  const NoiseRealization n = realize(spec, mask, 3);
  std::vector<double> phi(30);
  for (double& v : phi) v = phase(rng);
  const std::vector<double> base = apply_noise(phi, n);
  for (std::size_t j : mask.passive()) {
    std::vector<double> moved = phi;
    moved[j] += 1.234;
    const std::vector<double> out = apply_noise(moved, n);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i != j) CHECK(out[i] == base[i]);
    }
  }
}

}  // namespace
}  // namespace onchip::noise
