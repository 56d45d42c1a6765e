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

#include "onchip/layout.hpp"

#include <algorithm>

#include "onchip/active_mask.hpp"
#include "onchip/errors.hpp"
#include "onchip/mesh.hpp"

namespace onchip {

PhaseLayout::PhaseLayout(std::span<const std::pair<int, int>> layer_shapes)
    : layer_count_(layer_shapes.size()) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer_shapes.size(); ++l) {
    const auto [rows, cols] = layer_shapes[l];
    if (rows < 1 || cols < 1) throw ArgumentError("layer dimensions must be positive");
    const std::size_t sizes[3] = {mesh::rotation_count(rows),
                                  static_cast<std::size_t>(std::min(rows, cols)),
                                  mesh::rotation_count(cols)};
    const BlockKind kinds[3] = {BlockKind::kU, BlockKind::kSigma, BlockKind::kV};
    for (int b = 0; b < 3; ++b) {
      blocks_.push_back({l, kinds[b], offset, sizes[b]});
      block_index_.insert(block_index_.end(), sizes[b], blocks_.size() - 1);
      offset += sizes[b];
    }
  }
  total_ = offset;
}

const PhaseBlock& PhaseLayout::block_of(std::size_t index) const {
  if (index >= total_) throw ArgumentError("phase index out of range");
  return blocks_[block_index_[index]];
}

std::pair<std::size_t, std::size_t> PhaseLayout::layer_range(std::size_t layer) const {
  if (layer >= layer_count_) throw ArgumentError("layer index out of range");
  const PhaseBlock& first = blocks_[3 * layer];
  const PhaseBlock& last = blocks_[3 * layer + 2];
  return {first.offset, last.offset + last.size};
}

std::size_t PhaseLayout::unitary_phase_count() const { return total_ - sigma_phase_count(); }

std::size_t PhaseLayout::sigma_phase_count() const {
  std::size_t n = 0;
  for (const PhaseBlock& b : blocks_) {
    if (b.kind == BlockKind::kSigma) n += b.size;
  }
  return n;
}

ActiveMask::ActiveMask(std::vector<std::uint8_t> flags, double alpha)
    : flags_(std::move(flags)), alpha_(alpha) {
  for (std::size_t i = 0; i < flags_.size(); ++i) {
    if (flags_[i] != 0) active_.push_back(i);
  }
}

ActiveMask ActiveMask::all_active(std::size_t size) {
  return ActiveMask(std::vector<std::uint8_t>(size, 1), 1.0);
}

ActiveMask ActiveMask::all_passive(std::size_t size) {
  return ActiveMask(std::vector<std::uint8_t>(size, 0), 0.0);
}

std::vector<std::size_t> ActiveMask::passive() const {
  std::vector<std::size_t> out;
  out.reserve(flags_.size() - active_.size());
  for (std::size_t i = 0; i < flags_.size(); ++i) {
    if (flags_[i] == 0) out.push_back(i);
  }
  return out;
}

}  // namespace onchip
