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

// Scalar/SIMD backend equivalence. Elementwise kernels must agree bit for
// bit; reductions to relative rounding error.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ltfe/kernels.hpp"
#include "ltfe/rng.hpp"

using namespace ltfe;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

std::vector<kernels::Backend> available_simd() {
  std::vector<kernels::Backend> out;
  for (auto b : {kernels::Backend::avx2, kernels::Backend::neon})
    if (kernels::backend_available(b)) out.push_back(b);
  return out;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(kernels::backend_available(kernels::Backend::scalar));
  CHECK(kernels::scalar_table().add != nullptr);
}

TEST_CASE("elementwise kernels are bit-identical across backends") {
  const auto& ref = kernels::scalar_table();
  Rng rng(7001);
  for (auto backend : available_simd()) {
    const kernels::KernelTable* t = backend == kernels::Backend::avx2
                                        ? kernels::avx2_table()
                                        : kernels::neon_table();
    REQUIRE(t != nullptr);
    // Sizes straddle the vector width and include remainders.
    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 64u, 129u, 1000u}) {
      auto a = random_vec(n, rng), b = random_vec(n, rng);
      std::vector<double> r1(n), r2(n);

      ref.add(a.data(), b.data(), r1.data(), n);
      t->add(a.data(), b.data(), r2.data(), n);
      CHECK(r1 == r2);

      ref.sub(a.data(), b.data(), r1.data(), n);
      t->sub(a.data(), b.data(), r2.data(), n);
      CHECK(r1 == r2);

      ref.mul(a.data(), b.data(), r1.data(), n);
      t->mul(a.data(), b.data(), r2.data(), n);
      CHECK(r1 == r2);

      ref.neg(a.data(), r1.data(), n);
      t->neg(a.data(), r2.data(), n);
      CHECK(r1 == r2);

      ref.scale(1.7, a.data(), r1.data(), n);
      t->scale(1.7, a.data(), r2.data(), n);
      CHECK(r1 == r2);

      r1 = b;
      r2 = b;
      ref.axpy(-0.3, a.data(), r1.data(), n);
      t->axpy(-0.3, a.data(), r2.data(), n);
      CHECK(r1 == r2);

      r1 = b;
      r2 = b;
      ref.madd(a.data(), b.data(), r1.data(), n);
      t->madd(a.data(), b.data(), r2.data(), n);
      CHECK(r1 == r2);
    }
  }
}

TEST_CASE("reduction kernels agree across backends to rounding error") {
  const auto& ref = kernels::scalar_table();
  Rng rng(7002);
  for (auto backend : available_simd()) {
    const kernels::KernelTable* t = backend == kernels::Backend::avx2
                                        ? kernels::avx2_table()
                                        : kernels::neon_table();
    for (std::size_t n : {1u, 5u, 16u, 17u, 63u, 64u, 1000u, 4096u}) {
      auto a = random_vec(n, rng), b = random_vec(n, rng);
      const double d1 = ref.dot(a.data(), b.data(), n);
      const double d2 = t->dot(a.data(), b.data(), n);
      CHECK(std::abs(d1 - d2) <= 1e-12 * (1.0 + std::abs(d1)));

      const double s1 = ref.sum(a.data(), n);
      const double s2 = t->sum(a.data(), n);
      CHECK(std::abs(s1 - s2) <= 1e-12 * (1.0 + std::abs(s1)));

      const double q1 = ref.sumsq(a.data(), n);
      const double q2 = t->sumsq(a.data(), n);
      CHECK(std::abs(q1 - q2) <= 1e-12 * (1.0 + q1));
    }
  }
}

TEST_CASE("reductions match plain accumulation oracles") {
  const auto& K = kernels::active();
  Rng rng(7003);
  auto a = random_vec(257, rng), b = random_vec(257, rng);
  double dot = 0.0, sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    sum += a[i];
    sumsq += a[i] * a[i];
  }
  CHECK(K.dot(a.data(), b.data(), a.size()) == doctest::Approx(dot).epsilon(1e-13));
  CHECK(K.sum(a.data(), a.size()) == doctest::Approx(sum).epsilon(1e-13));
  CHECK(K.sumsq(a.data(), a.size()) == doctest::Approx(sumsq).epsilon(1e-13));
}

TEST_CASE("backend selection round-trips") {
  const kernels::Backend original = kernels::active_backend();
  kernels::select_backend(kernels::Backend::scalar);
  CHECK(kernels::active_backend() == kernels::Backend::scalar);
  kernels::select_backend(original);
  CHECK(kernels::active_backend() == original);
  CHECK(kernels::backend_name(kernels::Backend::scalar) == "scalar");
}
