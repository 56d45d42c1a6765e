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

// Dataset ingestion, hardware-unaware pretraining and deployment onto MZI
// meshes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "onchip/active_mask.hpp"
#include "onchip/linalg.hpp"
#include "onchip/network.hpp"
#include "onchip/noise.hpp"

namespace onchip::data {

struct Dataset {
  std::string name;
  Matrix features;           // n x d, every entry in [0, 1]
  std::vector<int> labels;   // n entries in [0, class_count)
  int class_count = 0;
  int image_side = 0;        // square images only; 0 for tabular data
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_count() const { return static_cast<std::size_t>(features.cols()); }

  // Throws ValidationError unless labels, ranges and the split are consistent.
  void check() const;
};

// Gathers rows into a batch.
network::Batch gather(const Dataset& dataset, std::span<const std::size_t> rows);

// Raw contents of an IDX file (optionally gzip-compressed).
struct IdxArray {
  std::uint8_t type = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

// Throws IoError when the file cannot be opened and FormatError (with the
// byte offset of the problem) on a bad magic number or truncated payload.
IdxArray read_idx(const std::filesystem::path& path);

// Images file (magic 0x00000803) + labels file (magic 0x00000801). Pixels
// are scaled to [0, 1]; every sample lands in `train`.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// MNIST directory layout: train-* and t10k-* files, .gz or plain.
Dataset load_mnist(const std::filesystem::path& dir);

// Non-overlapping average pooling to side x side. When the source side is
// not a multiple of the target, the image is first centre-cropped down or
// zero-padded up to the nearest multiple (whichever moves fewer pixels; a
// tie crops). 28 -> 8 crops to 24 and pools 3x3; 28 -> 16 pads to 32 and
// pools 2x2.
Dataset downsample(const Dataset& dataset, int side);

struct CsvSchema {
  std::string label_column = "label";
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

// Header row required; every other column is a numeric feature scaled
// per column to [0, 1] (constant columns map to 0). Integer labels are used
// as is; any other label text is mapped to class ids in sorted order.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

struct ClusterSpec {
  int features = 8;
  int classes = 4;
  int samples_per_class = 100;
  double spread = 0.15;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

// Gaussian class clusters in the unit cube, clipped to [0, 1]. Stand-in for
// the small vowel-style tables when no CSV is supplied.
Dataset synthetic_clusters(const ClusterSpec& spec);

// Deterministic train/test partition of n rows.
void assign_split(Dataset& dataset, double test_fraction, std::uint64_t seed);

// "64-24-24-10" -> {64, 24, 24, 10}.
std::vector<int> parse_arch(std::string_view arch);
std::string format_arch(std::span<const int> widths);

struct PretrainedModel {
  std::string arch;
  std::vector<Matrix> weights;  // layer l maps widths[l] -> widths[l+1]: shape out x in

  // Throws ValidationError when shapes do not compose or disagree with arch.
  void check() const;
};

struct PretrainConfig {
  int epochs = 60;
  double lr = 0.05;
  int batch_size = 32;
  std::uint64_t seed = 0;
  // When positive, every weight matrix is projected after each step so that
  // its largest singular value stays at or below this value.
  double sigma_cap = 0.0;
};

// Bias-free MLP with clipped-ReLU hidden units and softmax cross-entropy,
// trained with plain mini-batch SGD on the train split.
PretrainedModel pretrain_mlp(const Dataset& dataset, std::span<const int> arch,
                             const PretrainConfig& config);

// Dense reference forward (no meshes).
Matrix dense_forward(const PretrainedModel& model, const Matrix& inputs,
                     double relu_ceiling = network::kReluCeiling);
double dense_accuracy(const PretrainedModel& model, const Dataset& dataset,
                      std::span<const std::size_t> rows);

// Flat binary: "ONCHIPW1", u32 arch length, arch bytes, u32 layer count, then
// per layer u32 rows, u32 cols and rows*cols little-endian float64 values in
// row-major order.
void save_pretrained(const PretrainedModel& model, const std::filesystem::path& path);
PretrainedModel load_pretrained(const std::filesystem::path& path);

struct DeployedOnn {
  network::OnnModel model;
  ActiveMask mask;
  noise::NoiseRealization noise;
  std::size_t clamped = 0;  // singular values at or above the bound
};

struct DeploySettings {
  double sigma_bound = 3.0;
  double sigma_gamma = 0.0;
  double omega = 0.0;
  double alpha = 1.0;
  std::uint64_t mask_seed = 0;
  std::uint64_t noise_seed = 0;
};

// SVD per layer, unitaries decomposed onto Reck meshes, singular values
// encoded as arccos(sigma / m); then the active mask and a single frozen noise
// realization are drawn.
DeployedOnn deploy(const PretrainedModel& model, const DeploySettings& settings);

mesh::MeshLayer map_layer(const Matrix& weight, double sigma_bound, std::size_t* clamped = nullptr);

}  // namespace onchip::data
