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

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "ltfe/tensor.hpp"

namespace ltfe {

enum class Padding { circular, reflect };

/// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff tape. Operations execute eagerly and record a
/// backward closure; backward() replays the closures in reverse creation
/// order (the tape is already topologically sorted), visiting each node at
/// most once. Gradients of nodes the loss never reached stay exactly zero.
///
/// Values are immutable once recorded. A tape is confined to one thread;
/// independent tapes may run in parallel.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf with gradient tracking (model parameters, differentiable inputs).
  Var param(Tensor v);
  /// Leaf without gradient tracking (data, noise draws, targets).
  Var constant(Tensor v);

  const Tensor& value(Var x) const;
  /// Gradient accumulated for x by the last backward(); zeros if untouched.
  Tensor grad(Var x) const;
  bool requires_grad(Var x) const;

  /// Seeds d(loss)=1 and propagates. `loss` must be scalar (shape {1}).
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

  // -- elementwise --------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var relu(Var a);
  Var tanh_op(Var a);
  Var sigmoid(Var a);
  Var exp_op(Var a);
  /// c * x for a compile-time-known scalar c.
  Var scale(Var x, double c);
  /// s * x where s is a scalar (shape {1}) node.
  Var scale_by(Var x, Var s);

  // -- linear algebra ------------------------------------------------------
  Var matmul(Var a, Var b);            // [m,k] x [k,n] -> [m,n]
  Var vecmat(Var v, Var m);            // [k] x [k,n] -> [n]
  Var transpose(Var a);                // [m,n] -> [n,m]
  Var add_rowvec(Var a, Var v);        // [m,n] + [n] per row
  Var row_l2_normalize(Var a);         // rows scaled to unit L2 norm

  // -- shape ---------------------------------------------------------------
  Var concat(Var a, Var b);            // rank-1 concatenation
  Var reshape(Var a, std::vector<std::int64_t> shape);
  Var stack_rows(const std::vector<Var>& rows);  // m x [n] -> [m,n]

  // -- spatial -------------------------------------------------------------
  /// "Same" 2D convolution: input [h,w,ci], kernel [k,k,ci,co] with odd k.
  Var conv2d(Var input, Var kernel, Padding pad);
  /// Depthwise separable blur with fixed 1D taps (length 2r+1, summing to 1).
  Var blur2d(Var input, std::vector<double> taps, Padding pad);
  /// Per-channel bias over a [h,w,c] map.
  Var add_channels(Var map, Var bias);
  Var mean_pool_spatial(Var map);      // [h,w,c] -> [c]
  /// Mean over the half-open pixel rectangle [y0,y1) x [x0,x1), per channel.
  Var roi_mean_pool(Var map, std::int64_t y0, std::int64_t y1, std::int64_t x0,
                    std::int64_t x1);

  // -- reductions ----------------------------------------------------------
  Var sum(Var a);                      // -> [1]
  Var l2_norm(Var a);                  // -> [1]
  Var maxn(const std::vector<Var>& xs);  // scalars -> [1]; ties pick first

  // -- losses --------------------------------------------------------------
  /// Mean cross-entropy of row-wise softmax against integer labels.
  Var softmax_xent(Var logits, const std::vector<int>& labels);
  /// Mean over rows of elementwise smooth-L1 (threshold 1) against a target.
  Var smooth_l1(Var pred, const Tensor& target);
  /// Row-mean of -log( exp(s_ii) / sum_j exp(s_ij) ) over a similarity
  /// matrix; the denominator excludes j == i unless include_positive is set.
  Var infonce(Var sim, bool include_positive);

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&)> backward;
    bool requires_grad = false;
  };

  Var emit(Tensor value, bool requires_grad, std::function<void(Tape&)> bwd);
  const Tensor& v(Var x) const { return nodes_[static_cast<std::size_t>(x.id)].value; }
  Tensor& grad_buf(std::int32_t id);
  bool touched(std::int32_t id) const { return has_grad_[static_cast<std::size_t>(id)] != 0; }
  /// Grad of node id as read-only; only valid when touched(id).
  const Tensor& grad_ref(std::int32_t id) const { return grads_[static_cast<std::size_t>(id)]; }
  bool needs(Var x) const { return nodes_[static_cast<std::size_t>(x.id)].requires_grad; }

  // deque keeps value/grad references stable while new nodes are recorded
  std::deque<Node> nodes_;
  std::deque<Tensor> grads_;
  std::vector<char> has_grad_;
};

/// Max over all coordinates of |analytic - central difference| /
/// max(1, |analytic|, |numeric|) for a scalar-valued builder `f` evaluated at
/// `params`. Throws NumericalError if any evaluation is non-finite.
double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<Tensor>& params, double eps);

}  // namespace ltfe
