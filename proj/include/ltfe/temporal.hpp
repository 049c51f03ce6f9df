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

#include <utility>
#include <vector>

#include "ltfe/graph.hpp"
#include "ltfe/rng.hpp"

namespace ltfe {

/// One combined weight per gate over the concatenated [x (+) h] vector, plus
/// per-gate biases. Gate order: input, forget, output, candidate.
struct LstmParams {
  Tensor w_i, w_f, w_o, w_g;  // [(input_dim + hidden_dim), hidden_dim]
  Tensor b_i, b_f, b_o, b_g;  // [hidden_dim]

  int input_dim() const { return static_cast<int>(w_i.dim(0) - w_i.dim(1)); }
  int hidden_dim() const { return static_cast<int>(w_i.dim(1)); }

  /// Uniform +-1/sqrt(hidden_dim) weights; forget-gate bias 1, others 0.
  static LstmParams init(int input_dim, int hidden_dim, Rng& rng);
};

/// Tape handles for LstmParams, in the same gate order.
struct LstmVars {
  Var w_i, w_f, w_o, w_g, b_i, b_f, b_o, b_g;
};

/// Standard cell: gates sigmoid, candidate tanh, c = f.c_prev + i.g,
/// h = o.tanh(c). x is the pooled feature vector of the current step.
std::pair<Var, Var> lstm_step(Tape& tape, Var x, Var h_prev, Var c_prev, const LstmVars& p);

struct FusionVars {
  Var w_p;  // [(hidden_dim + input_dim), hidden_dim]
};

struct TemporalEncoding {
  std::vector<Var> h_seq;  // H_t, one ReLU'd fusion output per step
  Var h_final, c_final;    // LSTM states after the last step
};

/// Runs the LSTM over mean-pooled feature maps from h0 = c0 = 0 and fuses
/// each step as H_t = relu([h_t (+) pooled(F_t)] . W_p).
TemporalEncoding encode_sequence(Tape& tape, const std::vector<Var>& features,
                                 const LstmVars& lstm, const FusionVars& fusion);

}  // namespace ltfe
