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

#include "ltfe/temporal.hpp"

#include <cmath>

namespace ltfe {

LstmParams LstmParams::init(int input_dim, int hidden_dim, Rng& rng) {
  if (input_dim < 1 || hidden_dim < 1)
    throw DomainError("LstmParams::init: dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  const std::int64_t in = input_dim + hidden_dim, d = hidden_dim;
  LstmParams p;
  for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) {
    *w = Tensor({in, d});
    rng.fill_uniform(*w, -bound, bound);
  }
  p.b_i = Tensor({d});
  p.b_f = Tensor::full({d}, 1.0);
  p.b_o = Tensor({d});
  p.b_g = Tensor({d});
  return p;
}

std::pair<Var, Var> lstm_step(Tape& tape, Var x, Var h_prev, Var c_prev, const LstmVars& p) {
  const Tensor& xv = tape.value(x);
  const Tensor& hv = tape.value(h_prev);
  const Tensor& wv = tape.value(p.w_i);
  if (xv.rank() != 1 || hv.rank() != 1)
    throw ShapeError("lstm_step: x and h must be vectors");
  if (xv.dim(0) + hv.dim(0) != wv.dim(0))
    throw ShapeError("lstm_step: input " + xv.shape_str() + " + state " + hv.shape_str() +
                     " does not match gate weight " + wv.shape_str());
  if (!tape.value(c_prev).same_shape(hv)) throw ShapeError("lstm_step: h/c shape mismatch");

  Var z = tape.concat(x, h_prev);
  Var gi = tape.sigmoid(tape.add(tape.vecmat(z, p.w_i), p.b_i));
  Var gf = tape.sigmoid(tape.add(tape.vecmat(z, p.w_f), p.b_f));
  Var go = tape.sigmoid(tape.add(tape.vecmat(z, p.w_o), p.b_o));
  Var gg = tape.tanh_op(tape.add(tape.vecmat(z, p.w_g), p.b_g));
  Var c = tape.add(tape.mul(gf, c_prev), tape.mul(gi, gg));
  Var h = tape.mul(go, tape.tanh_op(c));
  return {h, c};
}

TemporalEncoding encode_sequence(Tape& tape, const std::vector<Var>& features,
                                 const LstmVars& lstm, const FusionVars& fusion) {
  if (features.empty()) throw DomainError("encode_sequence: empty feature sequence");
  const Tensor& first = tape.value(features.front());
  if (first.rank() != 3) throw ShapeError("encode_sequence: features must be [h,w,c] maps");
  for (Var f : features)
    if (!tape.value(f).same_shape(first))
      throw ShapeError("encode_sequence: inconsistent feature map shapes");

  const std::int64_t d = tape.value(lstm.w_i).dim(1);
  Var h = tape.constant(Tensor({d}));
  Var c = tape.constant(Tensor({d}));

  TemporalEncoding enc;
  enc.h_seq.reserve(features.size());
  for (Var f : features) {
    Var x = tape.mean_pool_spatial(f);
    std::tie(h, c) = lstm_step(tape, x, h, c, lstm);
    Var fused = tape.vecmat(tape.concat(h, x), fusion.w_p);
    enc.h_seq.push_back(tape.relu(fused));
  }
  enc.h_final = h;
  enc.c_final = c;
  return enc;
}

}  // namespace ltfe
