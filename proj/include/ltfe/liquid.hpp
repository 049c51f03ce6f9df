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

#include <functional>
#include <vector>

#include "ltfe/graph.hpp"
#include "ltfe/rng.hpp"

namespace ltfe {

/// Two-layer perceptron vector field over flattened kernel weights:
/// d(vec W)/d(tau) = W2 . tanh(W1 . [vec W (+) H] + b1) + b2.
/// The output layer is zero-initialized so the field starts identically zero
/// and integration starts at the W0 fixed point.
struct VectorFieldParams {
  Tensor w1;  // [(P + d), m]
  Tensor b1;  // [m]
  Tensor w2;  // [m, P]
  Tensor b2;  // [P]

  static VectorFieldParams init(int kernel_size, int c_in, int c_out, int encoding_dim,
                                int hidden, Rng& rng);
};

struct FieldVars {
  Var w1, b1, w2, b2;
};

struct OdeConfig {
  int steps = 4;          // RK4 steps over [0, tau_hat]
  double eps_norm = 1e-12;  // guards the horizon denominator

  void validate() const;
};

/// Identity kernel [k,k,c,c] (center tap connecting channel i -> i), scaled.
Tensor identity_kernel(int k, int channels, double scale);

/// vec-field evaluation: w_flat is [P], h is the step encoding [d].
Var field_apply(Tape& tape, const FieldVars& f, Var w_flat, Var h);

/// ||H_t|| / max(max_s ||H_s||, eps_norm), a scalar in [0, 1]. t is 1-based.
Var horizon(Tape& tape, const std::vector<Var>& encodings, int t, const OdeConfig& cfg);

/// Classic RK4 over d w / d tau = field(w) with fixed step tau / steps.
/// The field is autonomous; any step dependence is baked into the callable.
Var rk4_integrate(Tape& tape, const std::function<Var(Tape&, Var)>& field, Var w0_flat,
                  Var tau, int steps);

/// Integrates the MLP field from w0 over [0, tau_hat] with h_t held fixed.
Var rk4_solve(Tape& tape, const FieldVars& field, Var w0, Var h_t, Var tau_hat,
              const OdeConfig& cfg);

/// Residual application: conv2d(f0, w_t, pad) + f0. The convolution input is
/// always the initial map, never an already-adjusted one.
Var adjust_feature(Tape& tape, Var f0, Var w_t, Padding pad);

/// One independent solve per step, each restarting from w0, with the horizon
/// taken over the whole encoding sequence.
std::vector<Var> evolve_kernels(Tape& tape, const std::vector<Var>& encodings,
                                const FieldVars& field, Var w0, const OdeConfig& cfg);

}  // namespace ltfe
