// Copyright 2026 the ltfe authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ltfe/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace ltfe::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend detect_default() {
  if (const char* env = std::getenv("LTFE_BACKEND")) {
    std::string name(env);
    if (name == "scalar") return Backend::scalar;
    if (name == "avx2" && backend_available(Backend::avx2)) return Backend::avx2;
    if (name == "neon" && backend_available(Backend::neon)) return Backend::neon;
    // Unrecognized or unavailable request falls through to auto-detection.
  }
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

struct Dispatch {
  Backend backend;
  const KernelTable* table;
  Dispatch() : backend(detect_default()), table(nullptr) {
    switch (backend) {
      case Backend::avx2: table = avx2_table(); break;
      case Backend::neon: table = neon_table(); break;
      case Backend::scalar: table = &scalar_table(); break;
    }
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return avx2_table() != nullptr && cpu_has_avx2();
    case Backend::neon: return neon_table() != nullptr;
  }
  return false;
}

const KernelTable& active() { return *dispatch().table; }

Backend active_backend() { return dispatch().backend; }

void select_backend(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error("kernel backend not available: " + backend_name(b));
  Dispatch& d = dispatch();
  d.backend = b;
  switch (b) {
    case Backend::avx2: d.table = avx2_table(); break;
    case Backend::neon: d.table = neon_table(); break;
    case Backend::scalar: d.table = &scalar_table(); break;
  }
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

}  // namespace ltfe::kernels
