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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ltfe/liquid.hpp"
#include "oracles.hpp"

using namespace ltfe;

namespace {

Tensor rand_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_uniform(t, -scale, scale);
  return t;
}

// Linear test field dW/dtau = -W expressed as a tape builder.
Var neg_field(Tape& t, Var w) { return t.neg(w); }

double rk4_scalar_error(int steps) {
  Tape t;
  Var w0 = t.constant(Tensor::scalar(1.0));
  Var tau = t.constant(Tensor::scalar(1.0));
  Var w = rk4_integrate(t, neg_field, w0, tau, steps);
  return std::abs(t.value(w)[0] - std::exp(-1.0));
}

}  // namespace

TEST_CASE("horizon ratios") {
  OdeConfig cfg;
  auto build = [](Tape& t, std::vector<double> norms) {
    std::vector<Var> encodings;
    for (double n : norms) encodings.push_back(t.constant(Tensor({1}, {n})));
    return encodings;
  };

  Tape t;
  auto encodings = build(t, {2.0, 4.0, 1.0});
  CHECK(t.value(horizon(t, encodings, 2, cfg))[0] == 1.0);
  CHECK(t.value(horizon(t, encodings, 1, cfg))[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.value(horizon(t, encodings, 3, cfg))[0] == doctest::Approx(0.25).epsilon(1e-15));

  // all-zero encodings: guarded denominator gives exactly zero
  Tape t0;
  std::vector<Var> zero;
  for (int i = 0; i < 3; ++i) zero.push_back(t0.constant(Tensor({4})));
  for (int i = 1; i <= 3; ++i) CHECK(t0.value(horizon(t0, zero, i, cfg))[0] == 0.0);

  CHECK_THROWS_AS(horizon(t, encodings, 0, cfg), DomainError);
  CHECK_THROWS_AS(horizon(t, encodings, 4, cfg), DomainError);
}

TEST_CASE("horizon stays in [0,1] and reaches 1 on random encodings") {
  Rng rng(51);
  OdeConfig cfg;
  for (int rep = 0; rep < 200; ++rep) {
    Tape t;
    const int T = 1 + static_cast<int>(rng.below(6));
    std::vector<Var> encodings;
    for (int i = 0; i < T; ++i) encodings.push_back(t.constant(rand_tensor({5}, rng, 3.0)));
    double best = -1.0;
    for (int step = 1; step <= T; ++step) {
      const double tau = t.value(horizon(t, encodings, step, cfg))[0];
      CHECK(tau >= 0.0);
      CHECK(tau <= 1.0);
      best = std::max(best, tau);
    }
    CHECK(best == 1.0);
  }
}

TEST_CASE("RK4 solves the linear test problem to fourth order") {
  const double err10 = rk4_scalar_error(10);
  CHECK(err10 < 1e-6);
  CHECK(err10 > 0.0);

  // step-halving error ratios stay near 2^4
  double prev = err10;
  for (int steps : {20, 40, 80}) {
    const double err = rk4_scalar_error(steps);
    const double ratio = prev / err;
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
    const double order = std::log2(ratio);
    CHECK(order == doctest::Approx(4.0).epsilon(0.075));  // 4.0 +- 0.3
    prev = err;
  }
}

TEST_CASE("tau_hat = 0 returns the initial kernel exactly") {
  Rng rng(52);
  Tensor w0 = rand_tensor({3, 3, 2, 2}, rng);
  Tensor h = rand_tensor({4}, rng);
  FieldVars fv;
  OdeConfig cfg;
  Tape t;
  fv.w1 = t.param(rand_tensor({40, 5}, rng));
  fv.b1 = t.param(rand_tensor({5}, rng));
  fv.w2 = t.param(rand_tensor({5, 36}, rng));
  fv.b2 = t.param(rand_tensor({36}, rng));
  Var out = rk4_solve(t, fv, t.param(w0), t.constant(h), t.constant(Tensor::scalar(0.0)), cfg);
  const Tensor& ov = t.value(out);
  for (std::int64_t i = 0; i < ov.size(); ++i) CHECK(ov[i] == w0[i]);

  CHECK_THROWS_AS(
      rk4_solve(t, fv, t.param(w0), t.constant(h), t.constant(Tensor::scalar(1.5)), cfg),
      DomainError);
}

TEST_CASE("zero vector field leaves every kernel at W0") {
  Rng rng(53);
  const int k = 3, c = 2, d = 4;
  const std::int64_t p = k * k * c * c;
  Tensor w0 = identity_kernel(k, c, 0.1);
  Tape t;
  FieldVars fv;
  fv.w1 = t.param(rand_tensor({p + d, 6}, rng));
  fv.b1 = t.param(rand_tensor({6}, rng));
  fv.w2 = t.param(Tensor({6, p}));  // zero output layer -> zero field
  fv.b2 = t.param(Tensor({p}));
  std::vector<Var> encodings;
  for (int i = 0; i < 3; ++i) encodings.push_back(t.constant(rand_tensor({d}, rng)));
  OdeConfig cfg;
  std::vector<Var> kernels = evolve_kernels(t, encodings, fv, t.param(w0), cfg);
  REQUIRE(kernels.size() == 3);
  for (Var kv : kernels) {
    const Tensor& w = t.value(kv);
    for (std::int64_t i = 0; i < w.size(); ++i) CHECK(w[i] == w0[i]);
  }

  // residual application with W0 = 0 gives back F0; identity kernel doubles it
  Tensor f0 = rand_tensor({5, 5, c}, rng);
  Var adj0 = adjust_feature(t, t.constant(f0), t.constant(Tensor({k, k, c, c})), Padding::circular);
  for (std::int64_t i = 0; i < f0.size(); ++i) CHECK(t.value(adj0)[i] == f0[i]);
  Var adj2 = adjust_feature(t, t.constant(f0), t.constant(identity_kernel(k, c, 1.0)),
                            Padding::circular);
  for (std::int64_t i = 0; i < f0.size(); ++i)
    CHECK(t.value(adj2)[i] == doctest::Approx(2.0 * f0[i]).epsilon(1e-15));
}

TEST_CASE("adjust_feature matches conv oracle plus residual") {
  Rng rng(54);
  Tensor f0 = rand_tensor({4, 6, 2}, rng);
  Tensor w = rand_tensor({3, 3, 2, 2}, rng, 0.5);
  Tape t;
  const Tensor& got = t.value(adjust_feature(t, t.constant(f0), t.constant(w), Padding::circular));
  Tensor ref = oracle::conv2d(f0, w, Padding::circular);
  for (std::int64_t i = 0; i < ref.size(); ++i)
    CHECK(std::abs(got[i] - (ref[i] + f0[i])) < 1e-12);

  CHECK_THROWS_AS(
      adjust_feature(t, t.constant(f0), t.constant(rand_tensor({3, 3, 2, 3}, rng)), Padding::circular),
      ShapeError);
}

TEST_CASE("evolve_kernels equals independent per-step solves, in any order") {
  Rng rng(55);
  const int k = 3, c = 2, d = 4, m = 5;
  const std::int64_t p = k * k * c * c;
  Tensor w0 = rand_tensor({k, k, c, c}, rng, 0.3);
  Tensor w1 = rand_tensor({p + d, m}, rng, 0.4), b1 = rand_tensor({m}, rng, 0.2);
  Tensor w2 = rand_tensor({m, p}, rng, 0.4), b2 = rand_tensor({p}, rng, 0.2);
  std::vector<Tensor> hs;
  for (int i = 0; i < 3; ++i) hs.push_back(rand_tensor({d}, rng));
  OdeConfig cfg;

  auto solve_single = [&](int step) {
    Tape t;
    FieldVars fv{t.param(w1), t.param(b1), t.param(w2), t.param(b2)};
    std::vector<Var> encodings;
    for (const Tensor& h : hs) encodings.push_back(t.constant(h));
    Var tau = horizon(t, encodings, step, cfg);
    Var w = rk4_solve(t, fv, t.param(w0), encodings[static_cast<std::size_t>(step - 1)], tau, cfg);
    return t.value(w).raw();
  };

  Tape t;
  FieldVars fv{t.param(w1), t.param(b1), t.param(w2), t.param(b2)};
  std::vector<Var> encodings;
  for (const Tensor& h : hs) encodings.push_back(t.constant(h));
  std::vector<Var> kernels = evolve_kernels(t, encodings, fv, t.param(w0), cfg);

  // joint solves match isolated ones computed in reverse order
  for (int step : {3, 2, 1})
    CHECK(t.value(kernels[static_cast<std::size_t>(step - 1)]).raw() == solve_single(step));

  // T = 1 sequence is a single solve
  Tape t1;
  FieldVars fv1{t1.param(w1), t1.param(b1), t1.param(w2), t1.param(b2)};
  std::vector<Var> enc1 = {t1.constant(hs[0])};
  std::vector<Var> one = evolve_kernels(t1, enc1, fv1, t1.param(w0), cfg);
  REQUIRE(one.size() == 1);
  Var tau1 = horizon(t1, enc1, 1, cfg);
  Var direct = rk4_solve(t1, fv1, t1.param(w0), enc1[0], tau1, cfg);
  CHECK(t1.value(one[0]).raw() == t1.value(direct).raw());
}

TEST_CASE("gradients flow through horizon, solver and residual application") {
  Rng rng(56);
  const int k = 3, c = 2, d = 3, m = 4;
  const std::int64_t p = k * k * c * c;
  std::vector<Tensor> params = {
      rand_tensor({p + d, m}, rng, 0.4), rand_tensor({m}, rng, 0.2),
      rand_tensor({m, p}, rng, 0.3),     rand_tensor({p}, rng, 0.2),
      rand_tensor({k, k, c, c}, rng, 0.3), rand_tensor({d}, rng),
      rand_tensor({d}, rng),             rand_tensor({6, 6, c}, rng),
  };
  auto f = [](Tape& t, const std::vector<Var>& v) {
    FieldVars fv{v[0], v[1], v[2], v[3]};
    OdeConfig cfg{2, 1e-12};
    std::vector<Var> encodings = {v[5], v[6]};
    Var tau = horizon(t, encodings, 2, cfg);
    Var w = rk4_solve(t, fv, v[4], v[6], tau, cfg);
    Var adj = adjust_feature(t, v[7], w, Padding::circular);
    return t.l2_norm(adj);
  };
  CHECK(grad_check(f, params, 1e-6) < 1e-4);
}

TEST_CASE("non-finite states are rejected") {
  Tape t;
  // field dW/dtau = exp(30 W) blows up within a few steps from W(0) = 10
  auto explode = [](Tape& tt, Var w) { return tt.exp_op(tt.scale(w, 30.0)); };
  Var w0 = t.constant(Tensor::scalar(10.0));
  Var tau = t.constant(Tensor::scalar(1.0));
  CHECK_THROWS_AS(rk4_integrate(t, explode, w0, tau, 4), NumericalError);
}
