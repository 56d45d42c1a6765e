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

#include "onchip/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "onchip/errors.hpp"
#include "onchip/log.hpp"

namespace onchip::mesh {
namespace {

// Position of pair (i, j) in the plan order.
std::size_t plan_position(int dim, int i, int j) {
  return rotation_count(dim) - rotation_count(i) + static_cast<std::size_t>(j - 1);
}

void check_phase_inputs(int dim, std::span<const double> phases, std::span<const int> signs) {
  if (dim < 1) throw ArgumentError("mesh dimension must be positive");
  if (phases.size() != rotation_count(dim)) {
    throw ArgumentError(fmt::format("expected {} phases for dimension {}, got {}",
                                    rotation_count(dim), dim, phases.size()));
  }
  if (signs.size() != static_cast<std::size_t>(dim)) {
    throw ArgumentError(fmt::format("expected {} signs, got {}", dim, signs.size()));
  }
  for (int d : signs) {
    if (d != 1 && d != -1) throw ArgumentError("sign entries must be +1 or -1");
  }
}

// rows (j, i) <- R(phi) applied from the left.
inline void rotate_rows(Matrix& x, int i, int j, double c, double s) {
  double* rj = x.row(j - 1).data();
  double* ri = x.row(i - 1).data();
  const Eigen::Index n = x.cols();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = rj[k];
    const double b = ri[k];
    rj[k] = c * a - s * b;
    ri[k] = s * a + c * b;
  }
}

// rows (j, i) <- R(phi)^T applied from the left.
inline void rotate_rows_transposed(Matrix& x, int i, int j, double c, double s) {
  rotate_rows(x, i, j, c, -s);
}

// Nulls everything below the first diagonal entry; returns the residual
// (0, 0) entry, which is +-1 for an orthogonal input.
double null_columns(Matrix& a, std::vector<double>& phases) {
  const int dim = static_cast<int>(a.rows());
  std::size_t k = 0;
  for (int i = dim; i >= 2; --i) {
    for (int j = 1; j < i; ++j, ++k) {
      const double xj = a(j - 1, i - 1);
      const double xi = a(i - 1, i - 1);
      const double r = std::hypot(xj, xi);
      double c = 1.0;
      double s = 0.0;
      double phi = 0.0;
      if (r > 1e-300) {
        c = xi / r;
        s = -xj / r;
        phi = std::atan2(s, c);
      }
      rotate_rows_transposed(a, i, j, c, s);
      phases[k] = wrap_phase(phi);
    }
  }
  return a(0, 0);
}

}  // namespace

RotationPlan::RotationPlan(int dim) : dim_(dim) {
  if (dim < 1) throw ArgumentError("rotation plan dimension must be positive");
  order_.reserve(rotation_count(dim));
  for (int i = dim; i >= 2; --i) {
    for (int j = 1; j < i; ++j) order_.push_back({i, j});
  }
}

Vector apply_rotation(const Vector& x, int i, int j, double phi) {
  const auto n = static_cast<int>(x.size());
  if (j < 1 || i <= j || i > n) {
    throw ArgumentError(fmt::format("rotation indices ({}, {}) invalid for length {}", i, j, n));
  }
  Vector y = x;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  y(j - 1) = c * x(j - 1) - s * x(i - 1);
  y(i - 1) = s * x(j - 1) + c * x(i - 1);
  return y;
}

Matrix unitary_leading_columns(int dim, std::span<const double> phases,
                               std::span<const int> signs, int count) {
  check_phase_inputs(dim, phases, signs);
  if (count < 0 || count > dim) throw ArgumentError("column count out of range");
  Matrix x = Matrix::Identity(dim, count);
  // X <- R_0 R_1 ... R_{K-1} X: apply the last rotation first.
  for (int i = 2; i <= dim; ++i) {
    for (int j = i - 1; j >= 1; --j) {
      const double phi = phases[plan_position(dim, i, j)];
      rotate_rows(x, i, j, std::cos(phi), std::sin(phi));
    }
  }
  for (int t = 0; t < dim; ++t) {
    if (signs[t] < 0) x.row(t) *= -1.0;
  }
  return x;
}

Matrix unitary_leading_rows(int dim, std::span<const double> phases, std::span<const int> signs,
                            int count) {
  check_phase_inputs(dim, phases, signs);
  if (count < 0 || count > dim) throw ArgumentError("row count out of range");
  // Build the transpose, R_{K-1}^T ... R_0^T D E, with row operations.
  Matrix z = Matrix::Zero(dim, count);
  for (int t = 0; t < count; ++t) z(t, t) = signs[t];
  std::size_t k = 0;
  for (int i = dim; i >= 2; --i) {
    for (int j = 1; j < i; ++j, ++k) {
      rotate_rows_transposed(z, i, j, std::cos(phases[k]), std::sin(phases[k]));
    }
  }
  return z.transpose();
}

Matrix build_unitary(const RotationPlan& plan, std::span<const double> phases,
                     std::span<const int> signs) {
  return unitary_leading_columns(plan.dim(), phases, signs, plan.dim());
}

Decomposition decompose_orthogonal(const Matrix& u, double tolerance) {
  if (u.rows() != u.cols() || u.rows() == 0) {
    throw ArgumentError("decompose_orthogonal expects a non-empty square matrix");
  }
  const int dim = static_cast<int>(u.rows());
  const double defect = inf_norm(u.transpose() * u - Matrix::Identity(dim, dim));
  if (!(defect <= tolerance)) {
    throw ValidationError(
        fmt::format("matrix is not orthogonal: ||u^T u - I||_inf = {:.3e} > {:.1e}", defect,
                    tolerance));
  }

  Decomposition out;
  out.phases.assign(rotation_count(dim), 0.0);
  out.signs.assign(dim, 1);

  Matrix work = u;
  if (null_columns(work, out.phases) < 0.0) {
    // The residual carries det(u); fold it into D and redo the nulling on D*u.
    out.signs[0] = -1;
    work = u;
    work.row(0) *= -1.0;
    null_columns(work, out.phases);
  }
  return out;
}

std::vector<double> sigma_from_phases(std::span<const double> phi_s, double m) {
  std::vector<double> out(phi_s.size());
  std::transform(phi_s.begin(), phi_s.end(), out.begin(),
                 [m](double phi) { return m * std::cos(phi); });
  return out;
}

SingularPhases phases_from_singular(std::span<const double> sigma, double m) {
  if (!(m > 0.0)) throw ArgumentError("sigma bound m must be positive");
  SingularPhases out;
  out.phases.reserve(sigma.size());
  double worst = 0.0;
  for (double value : sigma) {
    if (value < 0.0) throw ArgumentError("negative singular values are not supported");
    if (value >= m) {
      ++out.clamped;
      worst = std::max(worst, value);
    }
    const double ratio = std::clamp(value / m, -1.0 + kSigmaClampEpsilon, 1.0 - kSigmaClampEpsilon);
    out.phases.push_back(std::acos(ratio));
  }
  if (out.clamped > 0) {
    log_warning(fmt::format("{} singular value(s) >= bound {} clamped (largest {:.6g})",
                            out.clamped, m, worst));
  }
  return out;
}

double wrap_phase(double phi) {
  if (!std::isfinite(phi)) throw ArgumentError("cannot wrap a non-finite phase");
  double r = std::fmod(phi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r + 0.0;  // normalizes -0.0
}

MeshLayer MeshLayer::identity(int rows, int cols, double sigma_bound) {
  if (rows < 1 || cols < 1) throw ArgumentError("layer dimensions must be positive");
  MeshLayer layer;
  layer.rows = rows;
  layer.cols = cols;
  layer.phi_u.assign(rotation_count(rows), 0.0);
  layer.phi_s.assign(static_cast<std::size_t>(std::min(rows, cols)), 0.0);
  layer.phi_v.assign(rotation_count(cols), 0.0);
  layer.d_u.assign(rows, 1);
  layer.d_v.assign(cols, 1);
  layer.sigma_bound = sigma_bound;
  return layer;
}

void MeshLayer::check_shape() const {
  if (rows < 1 || cols < 1) throw ArgumentError("layer dimensions must be positive");
  if (!(sigma_bound > 0.0)) throw ArgumentError("sigma bound must be positive");
  if (phi_s.size() != static_cast<std::size_t>(std::min(rows, cols))) {
    throw ArgumentError("phi_s length must equal min(rows, cols)");
  }
  check_phase_inputs(rows, phi_u, d_u);
  check_phase_inputs(cols, phi_v, d_v);
}

Matrix build_weight(const MeshLayer& layer) {
  layer.check_shape();
  const int r = static_cast<int>(layer.rank());
  const Matrix u = unitary_leading_columns(layer.rows, layer.phi_u, layer.d_u, r);
  const Matrix vt = unitary_leading_rows(layer.cols, layer.phi_v, layer.d_v, r);
  Vector sigma(r);
  for (int k = 0; k < r; ++k) sigma(k) = layer.sigma_bound * std::cos(layer.phi_s[k]);
  return u * sigma.asDiagonal() * vt;
}

}  // namespace onchip::mesh
