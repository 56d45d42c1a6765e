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

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace onchip {

enum class BlockKind { kU, kSigma, kV };

// A contiguous run of phases belonging to one matrix of one layer.
struct PhaseBlock {
  std::size_t layer = 0;
  BlockKind kind = BlockKind::kU;
  std::size_t offset = 0;  // global index of the first phase
  std::size_t size = 0;
};

// Global phase indexing of a multi-layer mesh model: for each layer in turn,
// its U phases, then Sigma phases, then V phases.
class PhaseLayout {
 public:
  PhaseLayout() = default;
  // Shapes are (rows, cols) per layer.
  explicit PhaseLayout(std::span<const std::pair<int, int>> layer_shapes);

  std::size_t total() const { return total_; }
  std::size_t layer_count() const { return layer_count_; }
  std::span<const PhaseBlock> blocks() const { return blocks_; }

  // Block containing global index `index`.
  const PhaseBlock& block_of(std::size_t index) const;
  std::size_t layer_of(std::size_t index) const { return block_of(index).layer; }
  bool is_sigma(std::size_t index) const { return block_of(index).kind == BlockKind::kSigma; }

  // [begin, end) global range covered by one layer.
  std::pair<std::size_t, std::size_t> layer_range(std::size_t layer) const;

  std::size_t unitary_phase_count() const;
  std::size_t sigma_phase_count() const;

 private:
  std::vector<PhaseBlock> blocks_;
  std::vector<std::size_t> block_index_;  // per global phase
  std::size_t total_ = 0;
  std::size_t layer_count_ = 0;
};

}  // namespace onchip
