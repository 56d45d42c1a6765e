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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "onchip/layout.hpp"
#include "onchip/linalg.hpp"
#include "onchip/mesh.hpp"
#include "onchip/noise.hpp"

namespace onchip::network {

inline constexpr double kReluCeiling = 4.0;

// min(max(x, 0), ceiling).
inline double relu_clip(double x, double ceiling = kReluCeiling) {
  return x < 0.0 ? 0.0 : (x > ceiling ? ceiling : x);
}

struct TensorShape {
  int channels = 1;
  int height = 1;
  int width = 1;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
};

// Convolution executed as a GEMM of the layer weight (out_channels x
// channels*kernel*kernel) with the im2col patch matrix.
struct ConvSpec {
  TensorShape input;
  int kernel = 3;
  int stride = 1;
  int padding = 0;

  int out_height() const { return (input.height + 2 * padding - kernel) / stride + 1; }
  int out_width() const { return (input.width + 2 * padding - kernel) / stride + 1; }
  int patch_size() const { return input.channels * kernel * kernel; }
};

// Patch matrix of a C x H x W tensor stored channel-major. Row index is
// c*k*k + ky*k + kx; column index is the output position in row-major scan
// order. Zero padding of `padding` pixels on every side.
Matrix im2col(std::span<const double> input, const TensorShape& shape, int kernel, int stride,
              int padding = 0);

// Counts ONN forward queries; safe to share between threads.
class QueryCounter {
 public:
  void add(std::uint64_t n = 1) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t total() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

// Stack of mesh layers with clipped-ReLU between them and raw logits at the
// output. No bias terms.
class OnnModel {
 public:
  OnnModel() = default;
  explicit OnnModel(std::vector<mesh::MeshLayer> layers,
                    std::vector<std::optional<ConvSpec>> conv = {},
                    double relu_ceiling = kReluCeiling);

  std::size_t layer_count() const { return layers_.size(); }
  std::span<const mesh::MeshLayer> layers() const { return layers_; }
  const mesh::MeshLayer& layer(std::size_t l) const { return layers_.at(l); }
  const std::optional<ConvSpec>& conv(std::size_t l) const { return conv_.at(l); }
  double relu_ceiling() const { return relu_ceiling_; }

  std::size_t layer_input_size(std::size_t l) const;
  std::size_t layer_output_size(std::size_t l) const;
  std::size_t input_size() const { return layer_input_size(0); }
  std::size_t output_size() const { return layer_output_size(layers_.size() - 1); }

  const PhaseLayout& layout() const { return layout_; }
  std::size_t phase_count() const { return layout_.total(); }
  double phase(std::size_t index) const;
  // Wraps onto [0, 2*pi).
  void set_phase(std::size_t index, double value);
  std::vector<double> phases() const;
  void set_phases(std::span<const double> values);
  // Stores values verbatim (used for noisy copies, whose phases are not wrapped).
  void assign_raw_phases(std::span<const double> values);

 private:
  double& phase_ref(std::size_t index);

  std::vector<mesh::MeshLayer> layers_;
  std::vector<std::optional<ConvSpec>> conv_;
  double relu_ceiling_ = kReluCeiling;
  PhaseLayout layout_;
};

struct Batch {
  Matrix inputs;            // B x input_size
  std::vector<int> labels;  // B entries
};

// Copy of `model` with phases replaced by Omega * Gamma * phi.
OnnModel perturbed(const OnnModel& model, const noise::NoiseRealization& noise);

// One layer applied to a batch (rows are samples), before activation.
Matrix layer_forward(const Matrix& weight, const std::optional<ConvSpec>& conv, const Matrix& x);

// Logits for every row of `inputs`. Adds one query to `counter` when given.
Matrix forward(const OnnModel& model, const Matrix& inputs,
               const noise::NoiseRealization* noise = nullptr, QueryCounter* counter = nullptr);
Matrix forward(const OnnModel& model, const Batch& batch,
               const noise::NoiseRealization* noise = nullptr, QueryCounter* counter = nullptr);

// Mean softmax cross-entropy, stabilized by max subtraction.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> predict(const Matrix& logits);

// Fraction of rows whose argmax equals the label. One query when `counter` is given.
double accuracy(const OnnModel& model, const Matrix& features, std::span<const int> labels,
                const noise::NoiseRealization* noise = nullptr, QueryCounter* counter = nullptr);

// Forward evaluator for a model whose phases change one at a time. Weights
// are cached per layer and rebuilt only after a write touches a phase that
// feeds the layer; activations of the bound batch are reused up to the
// first stale layer.
class IncrementalForward {
 public:
  IncrementalForward(OnnModel model, std::optional<noise::NoiseRealization> noise);

  const OnnModel& model() const { return model_; }
  const noise::NoiseRealization* noise() const { return noise_ ? &*noise_ : nullptr; }
  std::size_t phase_count() const { return model_.phase_count(); }
  double phase(std::size_t index) const { return model_.phase(index); }
  void set_phase(std::size_t index, double value);
  void set_phases(std::span<const double> values);

  void bind(const Matrix& inputs);
  const Matrix& logits();
  const Matrix& weight(std::size_t layer);

  std::uint64_t weight_builds() const { return weight_builds_; }

 private:
  void invalidate_layer(std::size_t layer);

  OnnModel model_;
  std::optional<noise::NoiseRealization> noise_;
  std::vector<double> nominal_;                        // flat copy of the model phases
  std::vector<std::vector<std::size_t>> dependents_;  // phases whose noisy value reads i
  std::vector<Matrix> weights_;
  std::vector<char> weight_valid_;
  std::vector<Matrix> activations_;  // [l] = input to layer l; back() = logits
  std::size_t valid_through_ = 0;    // activations_[0..valid_through_] are current
  bool bound_ = false;
  std::uint64_t weight_builds_ = 0;
};

}  // namespace onchip::network
