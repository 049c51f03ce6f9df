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

#include "ltfe/liquid.hpp"

#include <cmath>

namespace ltfe {

void OdeConfig::validate() const {
  if (steps < 1) throw DomainError("OdeConfig: steps must be >= 1");
  if (eps_norm <= 0.0) throw DomainError("OdeConfig: eps_norm must be > 0");
}

VectorFieldParams VectorFieldParams::init(int kernel_size, int c_in, int c_out,
                                          int encoding_dim, int hidden, Rng& rng) {
  const std::int64_t p =
      static_cast<std::int64_t>(kernel_size) * kernel_size * c_in * c_out;
  const std::int64_t in = p + encoding_dim;
  VectorFieldParams f;
  f.w1 = Tensor({in, hidden});
  rng.fill_uniform(f.w1, -1.0 / std::sqrt(static_cast<double>(in)),
                   1.0 / std::sqrt(static_cast<double>(in)));
  f.b1 = Tensor({hidden});
  f.w2 = Tensor({hidden, p});  // zero: field starts at the fixed point
  f.b2 = Tensor({p});
  return f;
}

Tensor identity_kernel(int k, int channels, double scale) {
  if (k < 1 || k % 2 == 0) throw DomainError("identity_kernel: k must be odd and positive");
  Tensor w({k, k, channels, channels});
  const int r = k / 2;
  for (int c = 0; c < channels; ++c) w.at(r, r, c, c) = scale;
  return w;
}

Var field_apply(Tape& tape, const FieldVars& f, Var w_flat, Var h) {
  Var in = tape.concat(w_flat, h);
  Var hid = tape.tanh_op(tape.add(tape.vecmat(in, f.w1), f.b1));
  return tape.add(tape.vecmat(hid, f.w2), f.b2);
}

Var horizon(Tape& tape, const std::vector<Var>& encodings, int t, const OdeConfig& cfg) {
  cfg.validate();
  if (encodings.empty()) throw DomainError("horizon: empty encoding sequence");
  if (t < 1 || t > static_cast<int>(encodings.size()))
    throw DomainError("horizon: t = " + std::to_string(t) + " outside [1," +
                      std::to_string(encodings.size()) + "]");
  std::vector<Var> norms;
  norms.reserve(encodings.size() + 1);
  for (Var h : encodings) norms.push_back(tape.l2_norm(h));
  Var numerator = norms[static_cast<std::size_t>(t - 1)];
  norms.push_back(tape.constant(Tensor::scalar(cfg.eps_norm)));
  return tape.div(numerator, tape.maxn(norms));
}

Var rk4_integrate(Tape& tape, const std::function<Var(Tape&, Var)>& field, Var w0_flat,
                  Var tau, int steps) {
  if (steps < 1) throw DomainError("rk4_integrate: steps must be >= 1");
  if (tape.value(tau).size() != 1) throw ShapeError("rk4_integrate: tau must be scalar");
  Var h = tape.scale(tau, 1.0 / static_cast<double>(steps));
  Var h_half = tape.scale(h, 0.5);
  Var h_sixth = tape.scale(h, 1.0 / 6.0);
  Var w = w0_flat;
  for (int n = 0; n < steps; ++n) {
    Var k1 = field(tape, w);
    Var k2 = field(tape, tape.add(w, tape.scale_by(k1, h_half)));
    Var k3 = field(tape, tape.add(w, tape.scale_by(k2, h_half)));
    Var k4 = field(tape, tape.add(w, tape.scale_by(k3, h)));
    Var combo = tape.add(tape.add(k1, tape.scale(k2, 2.0)),
                         tape.add(tape.scale(k3, 2.0), k4));
    w = tape.add(w, tape.scale_by(combo, h_sixth));
    if (!tape.value(w).all_finite())
      throw NumericalError("rk4_integrate: non-finite state at step " + std::to_string(n + 1));
  }
  return w;
}

Var rk4_solve(Tape& tape, const FieldVars& field, Var w0, Var h_t, Var tau_hat,
              const OdeConfig& cfg) {
  cfg.validate();
  if (tape.value(w0).rank() != 4) throw ShapeError("rk4_solve: kernel must be [k,k,ci,co]");
  const std::vector<std::int64_t> shape = tape.value(w0).shape();
  const double tau = tape.value(tau_hat)[0];
  if (!(tau >= 0.0 && tau <= 1.0))
    throw DomainError("rk4_solve: tau_hat must lie in [0,1]");
  const std::int64_t p = tape.value(w0).size();
  Var flat = tape.reshape(w0, {p});
  auto f = [&field, h_t](Tape& t, Var wf) { return field_apply(t, field, wf, h_t); };
  Var result = rk4_integrate(tape, f, flat, tau_hat, cfg.steps);
  return tape.reshape(result, shape);
}

Var adjust_feature(Tape& tape, Var f0, Var w_t, Padding pad) {
  const Tensor& f = tape.value(f0);
  const Tensor& w = tape.value(w_t);
  if (f.rank() != 3 || w.rank() != 4) throw ShapeError("adjust_feature: [h,w,c] and [k,k,ci,co] required");
  if (w.dim(2) != f.dim(2) || w.dim(3) != f.dim(2))
    throw ShapeError("adjust_feature: kernel channels " + w.shape_str() +
                     " do not match feature channels " + f.shape_str());
  return tape.add(tape.conv2d(f0, w_t, pad), f0);
}

std::vector<Var> evolve_kernels(Tape& tape, const std::vector<Var>& encodings,
                                const FieldVars& field, Var w0, const OdeConfig& cfg) {
  std::vector<Var> kernels;
  kernels.reserve(encodings.size());
  for (int t = 1; t <= static_cast<int>(encodings.size()); ++t) {
    Var tau = horizon(tape, encodings, t, cfg);
    kernels.push_back(
        rk4_solve(tape, field, w0, encodings[static_cast<std::size_t>(t - 1)], tau, cfg));
  }
  return kernels;
}

}  // namespace ltfe
