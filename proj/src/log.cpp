/* Copyright 2026 The fedstyle Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fedstyle/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace fedstyle {
namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarning};
std::mutex g_mu;

void emit(const char* tag, std::string_view msg) {
  std::lock_guard lock(g_mu);
  std::clog << "[fedstyle] " << tag << ": " << msg << '\n';
}
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warning(std::string_view msg) {
  if (g_level >= LogLevel::kWarning) emit("warning", msg);
}

void log_info(std::string_view msg) {
  if (g_level >= LogLevel::kInfo) emit("info", msg);
}

}  // namespace fedstyle
