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

#include <cmath>

#include "ltfe/align.hpp"
#include "ltfe/rng.hpp"
#include "oracles.hpp"

using namespace ltfe;

namespace {

Tensor rand_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_uniform(t, -scale, scale);
  return t;
}

}  // namespace

TEST_CASE("intra loss basics and oracle") {
  Tape t;
  Rng rng(61);
  Tensor p = rand_tensor({4, 6}, rng);

  // identical pairs: exactly zero
  CHECK(t.value(intra_loss(t, t.constant(p), t.constant(p)))[0] == 0.0);

  // single proposal, difference [3,4]: squared distance 25
  Tensor a({1, 2}, {1.0, 2.0});
  Tensor b({1, 2}, {4.0, 6.0});
  CHECK(t.value(intra_loss(t, t.constant(a), t.constant(b)))[0] ==
        doctest::Approx(25.0).epsilon(1e-15));

  // random batch vs the double-loop reference
  Tensor q = rand_tensor({4, 6}, rng);
  CHECK(std::abs(t.value(intra_loss(t, t.constant(p), t.constant(q)))[0] -
                 oracle::intra_loss(p, q)) < 1e-12);

  // positivity with equality iff identical
  CHECK(t.value(intra_loss(t, t.constant(p), t.constant(q)))[0] > 0.0);
  CHECK_THROWS_AS(intra_loss(t, t.constant(p), t.constant(rand_tensor({3, 6}, rng))), ShapeError);
}

TEST_CASE("inter loss literal form and oracle") {
  Tape t;
  Rng rng(62);

  // symmetric m = 2 case: s(P_i, P_hat_i) == s(P_i, P_hat_j) makes each
  // row's literal loss -log(1) = 0
  Tensor p({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor q({2, 2}, {1.0, 1.0, 1.0, 1.0});  // cos with both rows of q equal
  CHECK(std::abs(t.value(inter_loss(t, t.constant(p), t.constant(q), false))[0]) < 1e-12);

  // include_positive with all-equal similarities: log(m) per row
  for (int m : {2, 3, 5}) {
    Tensor pp = Tensor::full({m, 3}, 1.0);
    Tensor qq = Tensor::full({m, 3}, 1.0);
    CHECK(t.value(inter_loss(t, t.constant(pp), t.constant(qq), true))[0] ==
          doctest::Approx(std::log(static_cast<double>(m))).epsilon(1e-12));
  }

  // random batch against the double-loop reference, both variants
  Tensor a = rand_tensor({4, 6}, rng);
  Tensor b = rand_tensor({4, 6}, rng);
  CHECK(std::abs(t.value(inter_loss(t, t.constant(a), t.constant(b), false))[0] -
                 oracle::inter_loss(a, b, false)) < 1e-12);
  CHECK(std::abs(t.value(inter_loss(t, t.constant(a), t.constant(b), true))[0] -
                 oracle::inter_loss(a, b, true)) < 1e-12);

  // m < 2 and zero rows are rejected
  CHECK_THROWS_AS(inter_loss(t, t.constant(Tensor({1, 3}, {1, 2, 3})),
                             t.constant(Tensor({1, 3}, {1, 2, 3})), false),
                  DomainError);
  Tensor zrow = rand_tensor({2, 3}, rng);
  zrow.at(1, 0) = zrow.at(1, 1) = zrow.at(1, 2) = 0.0;
  Tensor other = rand_tensor({2, 3}, rng);
  CHECK_THROWS_AS(inter_loss(t, t.constant(zrow), t.constant(other), false), NumericalError);
}

TEST_CASE("inter loss is invariant to positive row rescaling") {
  Rng rng(63);
  Tensor p = rand_tensor({5, 7}, rng);
  Tensor q = rand_tensor({5, 7}, rng);
  Tape t;
  const double base = t.value(inter_loss(t, t.constant(p), t.constant(q), false))[0];

  Tensor p2 = p, q2 = q;
  for (std::int64_t j = 0; j < p.dim(1); ++j) {
    p2.at(2, j) *= 37.5;
    q2.at(4, j) *= 0.003;
  }
  const double scaled = t.value(inter_loss(t, t.constant(p2), t.constant(q2), false))[0];
  CHECK(std::abs(base - scaled) < 1e-10);
}

TEST_CASE("head losses: uniform logits, missing targets, oracle") {
  Rng rng(64);
  const int m = 5, n = 4, classes = 3;
  Tensor p = rand_tensor({m, n}, rng);
  Tensor q = rand_tensor({m, n}, rng);
  std::vector<int> labels = {0, 1, 2, 1, 0};

  // zero classifier weights: uniform logits, l_cls = log(C); absent targets: l_reg = 0
  Tape t;
  HeadVars zero{t.constant(Tensor({n, classes})), t.constant(Tensor({classes})),
                t.constant(Tensor({n, 4})), t.constant(Tensor({4}))};
  auto [lc, lr] = head_losses(t, t.constant(p), t.constant(q), labels, std::nullopt, zero);
  CHECK(t.value(lc)[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(t.value(lr)[0] == 0.0);

  // random heads against scalar oracles (both batches contribute equally)
  Tensor cw = rand_tensor({n, classes}, rng), cb = rand_tensor({classes}, rng, 0.2);
  Tensor rw = rand_tensor({n, 4}, rng), rb = rand_tensor({4}, rng, 0.2);
  Tensor targets = rand_tensor({m, 4}, rng, 0.5);
  Tape t2;
  HeadVars hv{t2.constant(cw), t2.constant(cb), t2.constant(rw), t2.constant(rb)};
  auto [lc2, lr2] = head_losses(t2, t2.constant(p), t2.constant(q), labels, targets, hv);

  auto logits_of = [&](const Tensor& feats) {
    Tensor z = oracle::matmul(feats, cw);
    for (std::int64_t i = 0; i < z.dim(0); ++i)
      for (std::int64_t j = 0; j < z.dim(1); ++j) z.at(i, j) += cb[j];
    return z;
  };
  const double ce = 0.5 * (oracle::softmax_xent(logits_of(p), labels) +
                           oracle::softmax_xent(logits_of(q), labels));
  CHECK(std::abs(t2.value(lc2)[0] - ce) < 1e-12);

  auto smooth = [&](const Tensor& feats) {
    Tensor z = oracle::matmul(feats, rw);
    double total = 0.0;
    for (std::int64_t i = 0; i < z.dim(0); ++i)
      for (std::int64_t j = 0; j < 4; ++j) {
        const double d = z.at(i, j) + rb[j] - targets.at(i, j);
        total += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
      }
    return total / m;
  };
  CHECK(std::abs(t2.value(lr2)[0] - 0.5 * (smooth(p) + smooth(q))) < 1e-12);

  // label out of range
  std::vector<int> bad = {0, 1, 3, 1, 0};
  CHECK_THROWS_AS(head_losses(t2, t2.constant(p), t2.constant(q), bad, targets, hv), DomainError);
}

TEST_CASE("total loss arithmetic and linearity") {
  Tape t;
  auto scalar = [&t](double v) { return t.constant(Tensor::scalar(v)); };

  LossBundleVars b = total_loss(t, scalar(2.0), scalar(3.0), scalar(1.0), scalar(0.0), 1.0, 0.1);
  CHECK(t.value(b.l_align)[0] == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(t.value(b.l_total)[0] == doctest::Approx(3.3).epsilon(1e-15));

  // alignment disabled
  LossBundleVars z = total_loss(t, scalar(2.0), scalar(3.0), scalar(1.5), scalar(0.25), 0.0, 0.0);
  CHECK(t.value(z.l_total)[0] == 1.75);

  // exact linear identities in the coefficients
  Rng rng(65);
  for (int rep = 0; rep < 50; ++rep) {
    const double li = rng.uniform(0.0, 5.0), le = rng.uniform(-2.0, 2.0);
    const double l1 = rng.uniform(0.0, 3.0), l2 = rng.uniform(0.0, 3.0);
    LossBundleVars r = total_loss(t, scalar(li), scalar(le), scalar(0.0), scalar(0.0), l1, l2);
    CHECK(t.value(r.l_align)[0] == l1 * li + l2 * le);
    CHECK(t.value(r.l_total)[0] == 0.0 + 0.0 + (l1 * li + l2 * le));
  }

  CHECK_THROWS_AS(total_loss(t, scalar(1), scalar(1), scalar(1), scalar(1), -0.1, 0.0),
                  DomainError);
}

TEST_CASE("proposal batch validation") {
  ProposalBatch b;
  CHECK_THROWS_AS(b.validate(), DomainError);  // empty batch

  Rng rng(66);
  b.features = rand_tensor({3, 4}, rng);
  b.labels = {0, 1};
  CHECK_THROWS_AS(b.validate(), ShapeError);  // label count mismatch
  b.labels = {0, 1, 2};
  b.validate();
  b.box_targets = rand_tensor({3, 3}, rng);
  CHECK_THROWS_AS(b.validate(), ShapeError);  // targets must be [m,4]
  b.box_targets = rand_tensor({3, 4}, rng);
  b.validate();
}

TEST_CASE("all loss paths pass gradient checks on a small batch") {
  Rng rng(67);
  const int m = 3, n = 4, classes = 3;
  Tensor targets = rand_tensor({m, 4}, rng, 0.5);
  std::vector<int> labels = {2, 0, 1};
  std::vector<Tensor> params = {
      rand_tensor({m, n}, rng),       rand_tensor({m, n}, rng),
      rand_tensor({n, classes}, rng), rand_tensor({classes}, rng, 0.2),
      rand_tensor({n, 4}, rng),       rand_tensor({4}, rng, 0.2)};
  auto f = [labels, targets](Tape& t, const std::vector<Var>& v) {
    HeadVars heads{v[2], v[3], v[4], v[5]};
    Var li = intra_loss(t, v[0], v[1]);
    Var le = inter_loss(t, v[0], v[1], false);
    Var lep = inter_loss(t, v[0], v[1], true);
    auto [lc, lr] = head_losses(t, v[0], v[1], labels, targets, heads);
    LossBundleVars b = total_loss(t, li, t.add(le, lep), lc, lr, 1.0, 0.1);
    return b.l_total;
  };
  CHECK(grad_check(f, params, 1e-6) < 1e-6);
}
