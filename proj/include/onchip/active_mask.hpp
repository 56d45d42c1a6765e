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
#include <cstdint>
#include <span>
#include <vector>

namespace onchip {

// Partition of all phase indices into tunable (active) and fixed (passive)
// devices. `alpha` is the fraction of U/V phases that are active; Sigma
// phases are always active.
class ActiveMask {
 public:
  ActiveMask() = default;
  ActiveMask(std::vector<std::uint8_t> flags, double alpha);

  static ActiveMask all_active(std::size_t size);
  static ActiveMask all_passive(std::size_t size);

  std::size_t size() const { return flags_.size(); }
  bool is_active(std::size_t index) const { return flags_[index] != 0; }
  double alpha() const { return alpha_; }

  // Sorted ascending.
  std::span<const std::size_t> active() const { return active_; }
  std::vector<std::size_t> passive() const;

  friend bool operator==(const ActiveMask& a, const ActiveMask& b) {
    return a.flags_ == b.flags_;
  }

 private:
  std::vector<std::uint8_t> flags_;
  std::vector<std::size_t> active_;
  double alpha_ = 0.0;
};

}  // namespace onchip
