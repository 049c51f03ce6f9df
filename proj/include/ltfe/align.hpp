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

#include <optional>
#include <utility>
#include <vector>

#include "ltfe/graph.hpp"

namespace ltfe {

/// Pooled per-proposal features with labels; paired batches share labels and
/// row order (row i of both views refers to the same proposal region).
struct ProposalBatch {
  Tensor features;              // [m, n]
  std::vector<int> labels;      // m class indices
  std::optional<Tensor> box_targets;  // [m, 4] when present

  void validate() const;  // DomainError on empty batch or label/shape mismatch
};

struct HeadVars {
  Var cls_w, cls_b;  // [n, classes], [classes]
  Var reg_w, reg_b;  // [n, 4], [4]
};

/// (1/m) sum_i || P_i - P_hat_i ||^2.
Var intra_loss(Tape& tape, Var p, Var p_hat);

/// Row-mean of -log( exp(cos(P_i, P_hat_i)) / sum_j exp(cos(P_i, P_hat_j)) ).
/// The denominator excludes j == i by default (the loss can then be
/// negative); include_positive switches to the standard contrastive form.
Var inter_loss(Tape& tape, Var p, Var p_hat, bool include_positive);

/// Mean classification cross-entropy and smooth-L1 box loss, each averaged
/// over both the original and the evolved proposal rows. l_reg is a constant
/// zero node when box targets are absent.
std::pair<Var, Var> head_losses(Tape& tape, Var p, Var p_hat, const std::vector<int>& labels,
                                const std::optional<Tensor>& box_targets, const HeadVars& heads);

struct LossBundleVars {
  Var l_intra, l_inter, l_cls, l_reg, l_align, l_total;
};

/// Loss values extracted from a bundle after forward evaluation.
struct LossBundle {
  double l_intra = 0, l_inter = 0, l_cls = 0, l_reg = 0, l_align = 0, l_total = 0;
};

/// l_align = lambda1 * l_intra + lambda2 * l_inter;
/// l_total = l_cls + l_reg + l_align.
LossBundleVars total_loss(Tape& tape, Var l_intra, Var l_inter, Var l_cls, Var l_reg,
                          double lambda1, double lambda2);

LossBundle read_bundle(const Tape& tape, const LossBundleVars& b);

}  // namespace ltfe
