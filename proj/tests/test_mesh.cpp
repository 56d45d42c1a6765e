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
#include <numbers>
#include <random>

#include <doctest.h>
#include <Eigen/SVD>

#include "onchip/errors.hpp"
#include "onchip/log.hpp"
#include "onchip/mesh.hpp"
#include "oracles.hpp"

namespace onchip::mesh {
namespace {

using testing::dense_unitary;
using testing::random_orthogonal;
constexpr double kPi = std::numbers::pi;

TEST_CASE("rotation plan follows the nested product order") {
  RotationPlan plan(4);
  REQUIRE(plan.size() == 6);
  const std::vector<std::pair<int, int>> expected = {{4, 1}, {4, 2}, {4, 3},
                                                     {3, 1}, {3, 2}, {2, 1}};
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(plan.order()[k].i == expected[k].first);
    CHECK(plan.order()[k].j == expected[k].second);
  }
  CHECK(RotationPlan(1).size() == 0);
  CHECK(rotation_count(64) == 2016);
}

TEST_CASE("apply_rotation") {
  Vector x(2);
  x << 1, 2;
  CHECK((apply_rotation(x, 2, 1, 0.0) - x).norm() == 0.0);
  Vector e(2);
  e << 1, 0;
  const Vector q = apply_rotation(e, 2, 1, kPi / 2);
  CHECK(q(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(q(1) == doctest::Approx(1.0));
  Vector y(2);
  y << 0.6, 0.8;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> phase(0.0, 2 * kPi);
  for (int t = 0; t < 20; ++t) CHECK(std::abs(apply_rotation(y, 2, 1, phase(rng)).norm() - 1.0) < 1e-12);
  CHECK_THROWS_AS(apply_rotation(y, 3, 1, 0.1), ArgumentError);
  CHECK_THROWS_AS(apply_rotation(y, 1, 1, 0.1), ArgumentError);
}

TEST_CASE("build_unitary matches the explicit product") {
  RotationPlan p2(2);
  const std::vector<int> s2 = {1, 1};
  const std::vector<double> zero = {0.0};
  CHECK((build_unitary(p2, zero, s2) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  const std::vector<double> quarter = {kPi / 2};
  Matrix expected(2, 2);
  expected << 0, -1, 1, 0;
  CHECK((build_unitary(p2, quarter, s2) - expected).cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> phase(0.0, 2 * kPi);
  for (int n : {3, 6, 9}) {
    RotationPlan plan(n);
    std::vector<double> phases(plan.size());
    for (double& v : phases) v = phase(rng);
    std::vector<int> signs(n);
    for (int t = 0; t < n; ++t) signs[t] = (t % 3 == 1) ? -1 : 1;
    const Matrix u = build_unitary(plan, phases, signs);
    CHECK((u - dense_unitary(n, phases, signs)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(inf_norm(u.transpose() * u - Matrix::Identity(n, n)) < 1e-10);
  }
  const std::vector<double> short_phases = {0.1};
  CHECK_THROWS_AS(build_unitary(RotationPlan(3), short_phases, std::vector<int>{1, 1, 1}),
                  ArgumentError);
  CHECK_THROWS_AS(build_unitary(p2, zero, std::vector<int>{1, 2}), ArgumentError);
}

TEST_CASE("full rotation plan preserves vector norms") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2 * kPi);
  const int n = 12;
  RotationPlan plan(n);
  Vector x(n);
  for (int t = 0; t < n; ++t) x(t) = g(rng);
  const double norm = x.norm();
  for (const IndexPair& pr : plan.order()) x = apply_rotation(x, pr.i, pr.j, phase(rng));
  CHECK(std::abs(x.norm() - norm) < 1e-10);
}

TEST_CASE("decompose_orthogonal round trip") {
  const Decomposition id = decompose_orthogonal(Matrix::Identity(5, 5));
  for (double v : id.phases) CHECK(v == 0.0);
  for (int sgn : id.signs) CHECK(sgn == 1);

  Matrix q(2, 2);
  q << 0, -1, 1, 0;
  const Decomposition dq = decompose_orthogonal(q);
  CHECK((build_unitary(RotationPlan(2), dq.phases, dq.signs) - q).cwiseAbs().maxCoeff() < 1e-12);

  // Reflection (det = -1) folds into the sign diagonal.
  Matrix refl = Matrix::Identity(3, 3);
  refl(2, 2) = -1;
  const Decomposition dr = decompose_orthogonal(refl);
  CHECK((build_unitary(RotationPlan(3), dr.phases, dr.signs) - refl).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix u = random_orthogonal(8, rng);
    const Decomposition d = decompose_orthogonal(u);
    for (double v : d.phases) {
      CHECK(v >= 0.0);
      CHECK(v < kTwoPi);
    }
    worst = std::max(worst, (dense_unitary(8, d.phases, d.signs) - u).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);

  Matrix bad = Matrix::Identity(3, 3);
  bad(0, 1) = 0.1;
  CHECK_THROWS_AS(decompose_orthogonal(bad), ValidationError);
  CHECK_THROWS_AS(decompose_orthogonal(Matrix::Identity(2, 3)), ArgumentError);
}

TEST_CASE("sigma phase maps") {
  const std::vector<double> phi = {0.0, kPi / 2, kPi};
  const std::vector<double> s = sigma_from_phases(phi, 3.0);
  CHECK(s[0] == doctest::Approx(3.0));
  CHECK(std::abs(s[1]) < 1e-15);
  CHECK(s[2] == doctest::Approx(-3.0));

  set_log_level(LogLevel::kQuiet);
  const std::vector<double> sigma = {3.0, 1.5, 0.0};
  const SingularPhases sp = phases_from_singular(sigma, 3.0);
  CHECK(sp.clamped == 1);
  CHECK(sp.phases[0] == doctest::Approx(std::acos(1.0 - kSigmaClampEpsilon)));
  CHECK(sp.phases[0] < 2e-3);
  CHECK(sp.phases[1] == doctest::Approx(kPi / 3));
  CHECK(sp.phases[2] == doctest::Approx(kPi / 2));
  CHECK_THROWS_AS(phases_from_singular(std::vector<double>{-1.0}, 3.0), ArgumentError);
  set_log_level(LogLevel::kWarning);
}

TEST_CASE("wrap_phase") {
  CHECK(wrap_phase(kTwoPi + 0.1) == doctest::Approx(0.1));
  CHECK(wrap_phase(-0.1) == doctest::Approx(kTwoPi - 0.1));
  CHECK(wrap_phase(0.0) == 0.0);
  CHECK(wrap_phase(kTwoPi) == 0.0);
  CHECK(!std::signbit(wrap_phase(-0.0)));
  const double tiny = wrap_phase(-1e-18);
  CHECK(tiny >= 0.0);
  CHECK(tiny < kTwoPi);
  CHECK_THROWS_AS(wrap_phase(std::nan("")), ArgumentError);
  CHECK_THROWS_AS(wrap_phase(INFINITY), ArgumentError);
}

TEST_CASE("build_weight") {
  const MeshLayer id = MeshLayer::identity(2, 2, 3.0);
  CHECK((build_weight(id) - 3.0 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

  MeshLayer z = MeshLayer::identity(2, 3, 3.0);
  z.phi_s = {kPi / 2, kPi / 2};
  CHECK(build_weight(z).cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(3);
  for (auto [m, n] : {std::pair{4, 6}, std::pair{6, 4}, std::pair{5, 5}, std::pair{1, 7}}) {
    const MeshLayer layer = testing::random_layer(m, n, rng);
    const Matrix w = build_weight(layer);
    CHECK((w - testing::dense_weight(layer)).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(w)};
    std::vector<double> expected;
    for (double p : layer.phi_s) expected.push_back(std::abs(layer.sigma_bound * std::cos(p)));
    std::sort(expected.rbegin(), expected.rend());
    for (std::size_t k = 0; k < expected.size(); ++k) {
      CHECK(std::abs(svd.singularValues()(static_cast<Eigen::Index>(k)) - expected[k]) < 1e-9);
      CHECK(svd.singularValues()(static_cast<Eigen::Index>(k)) < layer.sigma_bound);
    }
  }
  MeshLayer broken = MeshLayer::identity(3, 3, 3.0);
  broken.phi_u.pop_back();
  CHECK_THROWS_AS(build_weight(broken), ArgumentError);
}

}  // namespace
}  // namespace onchip::mesh
