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

// Independent reference implementations used by the tests. Nothing here
// calls the fast paths it is meant to check.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/QR>

#include "onchip/linalg.hpp"
#include "onchip/mesh.hpp"
#include "onchip/network.hpp"
#include "onchip/noise.hpp"
#include "onchip/optim.hpp"

namespace onchip::testing {

// Explicit N x N planar rotation R_ij (1-based, i > j).
inline Matrix rotation_matrix(int n, int i, int j, double phi) {
  Matrix r = Matrix::Identity(n, n);
  r(j - 1, j - 1) = std::cos(phi);
  r(j - 1, i - 1) = -std::sin(phi);
  r(i - 1, j - 1) = std::sin(phi);
  r(i - 1, i - 1) = std::cos(phi);
  return r;
}

// D * R(n,1) R(n,2) ... R(n,n-1) R(n-1,1) ... R(2,1), multiplied out densely.
inline Matrix dense_unitary(int n, std::span<const double> phases, std::span<const int> signs) {
  Matrix u = Matrix::Identity(n, n);
  std::size_t k = 0;
  for (int i = n; i >= 2; --i) {
    for (int j = 1; j < i; ++j) u = u * rotation_matrix(n, i, j, phases[k++]);
  }
  for (int t = 0; t < n; ++t) u.row(t) *= signs[t];
  return u;
}

inline Matrix dense_weight(const mesh::MeshLayer& layer) {
  const Matrix u = dense_unitary(layer.rows, layer.phi_u, layer.d_u);
  const Matrix v = dense_unitary(layer.cols, layer.phi_v, layer.d_v);
  Matrix sigma = Matrix::Zero(layer.rows, layer.cols);
  for (std::size_t k = 0; k < layer.phi_s.size(); ++k) {
    sigma(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) =
        layer.sigma_bound * std::cos(layer.phi_s[k]);
  }
  return u * sigma * v;
}

// Haar-ish random orthogonal matrix from the QR factorisation of a Gaussian.
inline Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  return q;
}

inline mesh::MeshLayer random_layer(int rows, int cols, std::mt19937_64& rng, double m = 3.0) {
  std::uniform_real_distribution<double> phase(0.0, mesh::kTwoPi);
  std::uniform_real_distribution<double> sig(0.05, 1.5);
  std::bernoulli_distribution flip(0.5);
  mesh::MeshLayer l;
  l.rows = rows;
  l.cols = cols;
  l.sigma_bound = m;
  for (std::size_t k = 0; k < mesh::rotation_count(rows); ++k) l.phi_u.push_back(phase(rng));
  for (std::size_t k = 0; k < mesh::rotation_count(cols); ++k) l.phi_v.push_back(phase(rng));
  for (int k = 0; k < std::min(rows, cols); ++k) l.phi_s.push_back(sig(rng));
  for (int k = 0; k < rows; ++k) l.d_u.push_back(flip(rng) ? -1 : 1);
  for (int k = 0; k < cols; ++k) l.d_v.push_back(flip(rng) ? -1 : 1);
  return l;
}

// Nested-loop convolution of one C x H x W sample with zero padding.
// weight is out_channels x (C*k*k), columns ordered (c, ky, kx).
inline std::vector<double> direct_conv(std::span<const double> x, const network::TensorShape& s,
                                       const Matrix& weight, int k, int stride, int pad) {
  const int oh = (s.height + 2 * pad - k) / stride + 1;
  const int ow = (s.width + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(weight.rows()) * oh * ow, 0.0);
  for (int o = 0; o < weight.rows(); ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (int c = 0; c < s.channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * stride + ky - pad;
              const int ix = xo * stride + kx - pad;
              if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
              acc += weight(o, (c * k + ky) * k + kx) *
                     x[static_cast<std::size_t>((c * s.height + iy) * s.width + ix)];
            }
          }
        }
        out[static_cast<std::size_t>((o * oh + y) * ow + xo)] = acc;
      }
    }
  }
  return out;
}

// Dense forward: applies the noise to the flat phase vector, rebuilds every
// weight with dense_weight and evaluates layer by layer with plain loops.
inline Matrix oracle_forward(const network::OnnModel& model, const Matrix& inputs,
                             const noise::NoiseRealization* noise = nullptr) {
  std::vector<double> flat = model.phases();
  if (noise != nullptr) flat = noise::apply_noise(flat, *noise);
  network::OnnModel noisy = model;
  noisy.assign_raw_phases(flat);
  Matrix h = inputs;
  for (std::size_t l = 0; l < noisy.layer_count(); ++l) {
    const Matrix w = dense_weight(noisy.layer(l));
    const auto& conv = noisy.conv(l);
    Matrix z(h.rows(), static_cast<Eigen::Index>(noisy.layer_output_size(l)));
    for (Eigen::Index b = 0; b < h.rows(); ++b) {
      if (conv) {
        std::vector<double> row(h.row(b).data(), h.row(b).data() + h.cols());
        const std::vector<double> y =
            direct_conv(row, conv->input, w, conv->kernel, conv->stride, conv->padding);
        for (std::size_t q = 0; q < y.size(); ++q) z(b, static_cast<Eigen::Index>(q)) = y[q];
      } else {
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < w.cols(); ++i) acc += w(o, i) * h(b, i);
          z(b, o) = acc;
        }
      }
    }
    if (l + 1 < noisy.layer_count()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        z.data()[i] = std::min(std::max(z.data()[i], 0.0), noisy.relu_ceiling());
      }
    }
    h = std::move(z);
  }
  return h;
}

// Phase objective backed by an arbitrary function of the phase vector.
class FunctionObjective : public optim::PhaseObjective {
 public:
  FunctionObjective(std::vector<double> phases, std::function<double(const std::vector<double>&)> f)
      : phases_(std::move(phases)), f_(std::move(f)) {}

  std::size_t dimension() const override { return phases_.size(); }
  double phase(std::size_t i) const override { return phases_[i]; }
  void set_phase(std::size_t i, double v) override { phases_[i] = mesh::wrap_phase(v); }
  double evaluate() override {
    ++evaluations;
    return f_(phases_);
  }
  const std::vector<double>& phases() const { return phases_; }

  std::uint64_t evaluations = 0;

 private:
  std::vector<double> phases_;
  std::function<double(const std::vector<double>&)> f_;
};

struct Quadratic {
  std::vector<double> centre;
  std::vector<double> weight;
  double operator()(const std::vector<double>& x) const {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) f += weight[i] * (x[i] - centre[i]) * (x[i] - centre[i]);
    return f;
  }
};

inline Quadratic random_quadratic(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.5, 5.5);
  std::uniform_real_distribution<double> w(0.1, 2.0);
  Quadratic q;
  for (std::size_t i = 0; i < n; ++i) {
    q.centre.push_back(c(rng));
    q.weight.push_back(w(rng));
  }
  return q;
}


}  // namespace onchip::testing
