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

#pragma once

#include <cstddef>
#include <string>

namespace ltfe::kernels {

// Flat f64 array kernels. Every dense inner loop in the library goes through
// this table so scalar and SIMD builds can be swapped and equivalence-tested.
//
// Contract:
//   * add/sub/mul/neg/scale/axpy are lane-independent (one rounding per
//     element, no FMA) and therefore bit-identical across backends.
//   * dot/sum/sumsq reassociate the accumulation; backends agree to relative
//     rounding error only. Within one backend the result is deterministic.
struct KernelTable {
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*neg)(const double* a, double* out, std::size_t n);
  // out[i] = s * a[i]
  void (*scale)(double s, const double* a, double* out, std::size_t n);
  // y[i] += s * x[i]
  void (*axpy)(double s, const double* x, double* y, std::size_t n);
  // y[i] += a[i] * b[i]
  void (*madd)(const double* a, const double* b, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*sumsq)(const double* a, std::size_t n);
};

enum class Backend { scalar, avx2, neon };

const KernelTable& scalar_table();

// Null when the corresponding ISA is not compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Active table. Initialized on first use: honors the LTFE_BACKEND environment
// variable ("scalar", "avx2", "neon"), otherwise picks the best backend the
// CPU supports. select_backend() overrides it programmatically (tests only;
// not thread-safe against concurrent kernel use).
const KernelTable& active();
Backend active_backend();
void select_backend(Backend b);
bool backend_available(Backend b);
std::string backend_name(Backend b);

}  // namespace ltfe::kernels
