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

#include "onchip/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "onchip/errors.hpp"

namespace onchip::network {
namespace {

std::vector<std::pair<int, int>> shapes_of(std::span<const mesh::MeshLayer> layers) {
  std::vector<std::pair<int, int>> shapes;
  for (const auto& l : layers) shapes.emplace_back(l.rows, l.cols);
  return shapes;
}

void activate(Matrix& x, double ceiling) {
  x = x.unaryExpr([ceiling](double v) { return relu_clip(v, ceiling); });
}

}  // namespace

Matrix im2col(std::span<const double> input, const TensorShape& shape, int kernel, int stride,
              int padding) {
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw ArgumentError("kernel and stride must be positive, padding non-negative");
  }
  if (input.size() != shape.size()) {
    throw ArgumentError(fmt::format("im2col input has {} values, shape needs {}", input.size(),
                                    shape.size()));
  }
  const int padded_h = shape.height + 2 * padding;
  const int padded_w = shape.width + 2 * padding;
  if (kernel > padded_h || kernel > padded_w) {
    throw ArgumentError(fmt::format("kernel {} larger than input {}x{}", kernel, padded_h, padded_w));
  }
  const int out_h = (padded_h - kernel) / stride + 1;
  const int out_w = (padded_w - kernel) / stride + 1;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(shape.channels) * kernel * kernel,
                             static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < shape.channels; ++c) {
    const double* plane = input.data() + static_cast<std::size_t>(c) * shape.height * shape.width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride + ky - padding;
          if (y < 0 || y >= shape.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride + kx - padding;
            if (x < 0 || x >= shape.width) continue;
            cols(row, static_cast<Eigen::Index>(oy) * out_w + ox) = plane[y * shape.width + x];
          }
        }
      }
    }
  }
  return cols;
}

OnnModel::OnnModel(std::vector<mesh::MeshLayer> layers, std::vector<std::optional<ConvSpec>> conv,
                   double relu_ceiling)
    : layers_(std::move(layers)), conv_(std::move(conv)), relu_ceiling_(relu_ceiling) {
  if (layers_.empty()) throw ArgumentError("model needs at least one layer");
  if (conv_.empty()) conv_.resize(layers_.size());
  if (conv_.size() != layers_.size()) {
    throw ArgumentError("conv descriptors must be absent or one per layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].check_shape();
    if (conv_[l]) {
      const ConvSpec& c = *conv_[l];
      if (c.kernel < 1 || c.stride < 1 || c.padding < 0 || c.out_height() < 1 ||
          c.out_width() < 1) {
        throw ArgumentError(fmt::format("layer {}: invalid convolution descriptor", l));
      }
      if (layers_[l].cols != c.patch_size()) {
        throw ArgumentError(fmt::format("layer {}: {} columns but patches have {} values", l,
                                        layers_[l].cols, c.patch_size()));
      }
    }
    if (l > 0 && layer_input_size(l) != layer_output_size(l - 1)) {
      throw ArgumentError(fmt::format("layer {} expects {} inputs but layer {} produces {}", l,
                                      layer_input_size(l), l - 1, layer_output_size(l - 1)));
    }
  }
  const auto shapes = shapes_of(layers_);
  layout_ = PhaseLayout(shapes);
}

std::size_t OnnModel::layer_input_size(std::size_t l) const {
  const auto& c = conv_.at(l);
  return c ? c->input.size() : static_cast<std::size_t>(layers_.at(l).cols);
}

std::size_t OnnModel::layer_output_size(std::size_t l) const {
  const auto& c = conv_.at(l);
  const auto rows = static_cast<std::size_t>(layers_.at(l).rows);
  return c ? rows * c->out_height() * c->out_width() : rows;
}

double& OnnModel::phase_ref(std::size_t index) {
  const PhaseBlock& b = layout_.block_of(index);
  mesh::MeshLayer& layer = layers_[b.layer];
  const std::size_t k = index - b.offset;
  switch (b.kind) {
    case BlockKind::kU:
      return layer.phi_u[k];
    case BlockKind::kSigma:
      return layer.phi_s[k];
    case BlockKind::kV:
      break;
  }
  return layer.phi_v[k];
}

double OnnModel::phase(std::size_t index) const {
  return const_cast<OnnModel*>(this)->phase_ref(index);
}

void OnnModel::set_phase(std::size_t index, double value) {
  phase_ref(index) = mesh::wrap_phase(value);
}

std::vector<double> OnnModel::phases() const {
  std::vector<double> out;
  out.reserve(phase_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.phi_u.begin(), l.phi_u.end());
    out.insert(out.end(), l.phi_s.begin(), l.phi_s.end());
    out.insert(out.end(), l.phi_v.begin(), l.phi_v.end());
  }
  return out;
}

void OnnModel::assign_raw_phases(std::span<const double> values) {
  if (values.size() != phase_count()) {
    throw ArgumentError(
        fmt::format("model has {} phases, got {}", phase_count(), values.size()));
  }
  auto it = values.begin();
  for (auto& l : layers_) {
    for (auto* v : {&l.phi_u, &l.phi_s, &l.phi_v}) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(v->size()), v->begin());
      it += static_cast<std::ptrdiff_t>(v->size());
    }
  }
}

void OnnModel::set_phases(std::span<const double> values) {
  std::vector<double> wrapped(values.size());
  std::transform(values.begin(), values.end(), wrapped.begin(), mesh::wrap_phase);
  assign_raw_phases(wrapped);
}

OnnModel perturbed(const OnnModel& model, const noise::NoiseRealization& noise) {
  OnnModel out = model;
  out.assign_raw_phases(noise::apply_noise(model.phases(), noise));
  return out;
}

Matrix layer_forward(const Matrix& weight, const std::optional<ConvSpec>& conv, const Matrix& x) {
  if (!conv) {
    if (x.cols() != weight.cols()) {
      throw ArgumentError(
          fmt::format("input width {} does not match layer width {}", x.cols(), weight.cols()));
    }
    return x * weight.transpose();
  }
  const ConvSpec& c = *conv;
  if (static_cast<std::size_t>(x.cols()) != c.input.size()) {
    throw ArgumentError(fmt::format("conv input width {} does not match {}x{}x{}", x.cols(),
                                    c.input.channels, c.input.height, c.input.width));
  }
  const Eigen::Index positions = static_cast<Eigen::Index>(c.out_height()) * c.out_width();
  Matrix out(x.rows(), weight.rows() * positions);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const Matrix patches =
        im2col(std::span<const double>(x.row(b).data(), static_cast<std::size_t>(x.cols())),
               c.input, c.kernel, c.stride, c.padding);
    const Matrix y = weight * patches;  // out_channels x positions, channel-major flatten
    out.row(b) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), y.size());
  }
  return out;
}

Matrix forward(const OnnModel& model, const Matrix& inputs, const noise::NoiseRealization* noise,
               QueryCounter* counter) {
  if (static_cast<std::size_t>(inputs.cols()) != model.input_size()) {
    throw ArgumentError(fmt::format("batch width {} does not match model input {}", inputs.cols(),
                                    model.input_size()));
  }
  const OnnModel noisy = noise ? perturbed(model, *noise) : OnnModel();
  const OnnModel& effective = noise ? noisy : model;
  Matrix x = inputs;
  for (std::size_t l = 0; l < effective.layer_count(); ++l) {
    x = layer_forward(mesh::build_weight(effective.layer(l)), effective.conv(l), x);
    if (l + 1 < effective.layer_count()) activate(x, effective.relu_ceiling());
  }
  if (counter != nullptr) counter->add(1);
  return x;
}

Matrix forward(const OnnModel& model, const Batch& batch, const noise::NoiseRealization* noise,
               QueryCounter* counter) {
  return forward(model, batch.inputs, noise, counter);
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.cols() < 2) throw ArgumentError("cross entropy needs at least two classes");
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw ArgumentError("cross entropy: label count must equal batch size (and be non-zero)");
  }
  double total = 0.0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const int label = labels[b];
    if (label < 0 || label >= logits.cols()) throw ArgumentError("label out of range");
    const double peak = logits.row(b).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) sum += std::exp(logits(b, k) - peak);
    total += std::log(sum) - (logits(b, label) - peak);
  }
  return total / static_cast<double>(logits.rows());
}

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(b, k) > logits(b, best)) best = k;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const OnnModel& model, const Matrix& features, std::span<const int> labels,
                const noise::NoiseRealization* noise, QueryCounter* counter) {
  if (features.rows() == 0) throw ArgumentError("accuracy needs a non-empty dataset");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ArgumentError("accuracy: label count must equal sample count");
  }
  IncrementalForward eval(model, noise ? std::optional(*noise) : std::nullopt);
  constexpr Eigen::Index kChunk = 1024;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < features.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, features.rows() - start);
    eval.bind(features.middleRows(start, n));
    const std::vector<int> pred = predict(eval.logits());
    for (Eigen::Index b = 0; b < n; ++b) correct += pred[b] == labels[start + b] ? 1 : 0;
  }
  if (counter != nullptr) counter->add(1);
  return static_cast<double>(correct) / static_cast<double>(features.rows());
}

IncrementalForward::IncrementalForward(OnnModel model,
                                       std::optional<noise::NoiseRealization> noise)
    : model_(std::move(model)), noise_(std::move(noise)) {
  const std::size_t n = model_.phase_count();
  if (noise_ && (noise_->size() != n || noise_->omega.size() != n)) {
    throw ArgumentError(fmt::format("noise realization covers {} phases but the model has {}",
                                    noise_->size(), n));
  }
  nominal_ = model_.phases();
  dependents_.resize(n);
  if (noise_) {
    for (std::size_t r = 0; r < n; ++r) {
      for (const auto& e : noise_->omega.off_diagonal(r)) dependents_[e.col].push_back(r);
    }
  }
  weights_.resize(model_.layer_count());
  weight_valid_.assign(model_.layer_count(), 0);
  activations_.resize(model_.layer_count() + 1);
}

void IncrementalForward::invalidate_layer(std::size_t layer) {
  weight_valid_[layer] = 0;
  valid_through_ = std::min(valid_through_, layer);
}

void IncrementalForward::set_phase(std::size_t index, double value) {
  model_.set_phase(index, value);
  nominal_[index] = model_.phase(index);
  invalidate_layer(model_.layout().layer_of(index));
  for (std::size_t r : dependents_[index]) invalidate_layer(model_.layout().layer_of(r));
}

void IncrementalForward::set_phases(std::span<const double> values) {
  model_.set_phases(values);
  nominal_ = model_.phases();
  for (std::size_t l = 0; l < model_.layer_count(); ++l) invalidate_layer(l);
}

void IncrementalForward::bind(const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != model_.input_size()) {
    throw ArgumentError(fmt::format("batch width {} does not match model input {}", inputs.cols(),
                                    model_.input_size()));
  }
  activations_[0] = inputs;
  valid_through_ = 0;
  bound_ = true;
}

const Matrix& IncrementalForward::weight(std::size_t layer) {
  if (!weight_valid_.at(layer)) {
    if (noise_) {
      mesh::MeshLayer noisy = model_.layer(layer);
      std::size_t index = model_.layout().layer_range(layer).first;
      for (auto* v : {&noisy.phi_u, &noisy.phi_s, &noisy.phi_v}) {
        for (double& p : *v) p = noise::noisy_phase(nominal_, *noise_, index++);
      }
      weights_[layer] = mesh::build_weight(noisy);
    } else {
      weights_[layer] = mesh::build_weight(model_.layer(layer));
    }
    weight_valid_[layer] = 1;
    ++weight_builds_;
  }
  return weights_[layer];
}

const Matrix& IncrementalForward::logits() {
  if (!bound_) throw ArgumentError("no batch bound to the evaluator");
  const std::size_t layers = model_.layer_count();
  for (std::size_t l = valid_through_; l < layers; ++l) {
    Matrix y = layer_forward(weight(l), model_.conv(l), activations_[l]);
    if (l + 1 < layers) activate(y, model_.relu_ceiling());
    activations_[l + 1] = std::move(y);
  }
  valid_through_ = layers;
  return activations_[layers];
}

}  // namespace onchip::network
