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

// Reck-style planar-rotation parametrization of real orthogonal matrices and
// the SVD-factored layer W = U * Sigma * V^T built from three phase vectors.
//
// Rotation R_ij(phi) (1-based, i > j) is the identity except
//   R[j][j] = cos, R[j][i] = -sin, R[i][j] = sin, R[i][i] = cos,
// and an N x N orthogonal matrix is D * R_{N,1} R_{N,2} ... R_{N,N-1}
// R_{N-1,1} ... R_{2,1} with D = diag(+-1).

#include <cstddef>
#include <span>
#include <vector>

#include "onchip/linalg.hpp"

namespace onchip::mesh {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Clamp margin used when mapping singular values onto cosine phases.
inline constexpr double kSigmaClampEpsilon = 1e-6;

struct IndexPair {
  int i;  // 1-based, i > j
  int j;
};

// Number of rotations in an N-dimensional mesh, N(N-1)/2.
constexpr std::size_t rotation_count(int dim) {
  return dim < 2 ? 0 : static_cast<std::size_t>(dim) * (dim - 1) / 2;
}

// Product order of the rotations: outer i descending from N to 2, inner j
// ascending from 1 to i-1. Phase k of a phase vector belongs to order()[k].
class RotationPlan {
 public:
  explicit RotationPlan(int dim);

  int dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }
  std::span<const IndexPair> order() const { return order_; }

 private:
  int dim_;
  std::vector<IndexPair> order_;
};

// Replaces (x_j, x_i) with (c*x_j - s*x_i, s*x_j + c*x_i).
Vector apply_rotation(const Vector& x, int i, int j, double phi);

// D * prod R_ij(phi_ij) in plan order.
Matrix build_unitary(const RotationPlan& plan, std::span<const double> phases,
                     std::span<const int> signs);

struct Decomposition {
  std::vector<double> phases;  // plan order, each in [0, 2*pi)
  std::vector<int> signs;      // diagonal of D
};

// Givens nulling of an orthogonal matrix; inverse of build_unitary up to
// round-off. Throws ValidationError when ||u^T u - I||_inf > tolerance.
Decomposition decompose_orthogonal(const Matrix& u, double tolerance = 1e-8);

// m * cos(phi_k).
std::vector<double> sigma_from_phases(std::span<const double> phi_s, double m);

struct SingularPhases {
  std::vector<double> phases;
  std::size_t clamped = 0;  // count of inputs with sigma >= m
};

// arccos(clamp(sigma / m, -1 + eps, 1 - eps)), principal branch. Inputs with
// sigma >= m are clamped and counted; a warning is written to stderr.
SingularPhases phases_from_singular(std::span<const double> sigma, double m);

// Maps any finite angle onto [0, 2*pi). Throws ArgumentError on NaN/inf.
double wrap_phase(double phi);

// One SVD-factored layer with `rows` outputs and `cols` inputs.
struct MeshLayer {
  int rows = 0;
  int cols = 0;
  std::vector<double> phi_u;  // rotation_count(rows)
  std::vector<double> phi_s;  // min(rows, cols)
  std::vector<double> phi_v;  // rotation_count(cols)
  std::vector<int> d_u;       // rows entries of +-1
  std::vector<int> d_v;       // cols entries of +-1
  double sigma_bound = 3.0;

  // All phases zero and all signs +1: U = V = I and Sigma = m * I.
  static MeshLayer identity(int rows, int cols, double sigma_bound);

  std::size_t rank() const { return phi_s.size(); }
  std::size_t phase_count() const { return phi_u.size() + phi_s.size() + phi_v.size(); }

  // Throws ArgumentError when vector lengths or signs are inconsistent.
  void check_shape() const;
};

// W = U(phi_u) * Sigma(phi_s) * V^T(phi_v). Only the leading min(M, N)
// columns of U and rows of V^T are formed.
Matrix build_weight(const MeshLayer& layer);

// Leading `count` columns of D * prod R in plan order (dim x count).
Matrix unitary_leading_columns(int dim, std::span<const double> phases,
                               std::span<const int> signs, int count);

// Leading `count` rows of D * prod R in plan order (count x dim).
Matrix unitary_leading_rows(int dim, std::span<const double> phases,
                            std::span<const int> signs, int count);

}  // namespace onchip::mesh
