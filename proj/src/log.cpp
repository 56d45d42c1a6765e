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

#include "onchip/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace onchip {
namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::kWarning)};
std::mutex g_stderr_mutex;

void emit(std::string_view tag, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_stderr_mutex);
  std::cerr << "[onchip] " << tag << ": " << message << '\n';
}

}  // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_warning(std::string_view message) {
  if (g_level.load() >= static_cast<int>(LogLevel::kWarning)) emit("warning", message);
}

void log_info(std::string_view message) {
  if (g_level.load() >= static_cast<int>(LogLevel::kInfo)) emit("info", message);
}

}  // namespace onchip
