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

#include "ltfe/align.hpp"

namespace ltfe {

namespace {

void require_paired(const Tensor& p, const Tensor& q) {
  if (p.rank() != 2 || q.rank() != 2)
    throw ShapeError("proposal features must be [m,n] matrices");
  if (!p.same_shape(q))
    throw ShapeError("paired proposal batches differ: " + p.shape_str() + " vs " +
                     q.shape_str());
}

}  // namespace

void ProposalBatch::validate() const {
  if (labels.empty()) throw DomainError("proposal batch is empty");
  if (features.rank() != 2 || features.dim(0) != static_cast<std::int64_t>(labels.size()))
    throw ShapeError("proposal features " + features.shape_str() +
                     " do not match label count " + std::to_string(labels.size()));
  if (box_targets) {
    if (box_targets->rank() != 2 || box_targets->dim(0) != features.dim(0) ||
        box_targets->dim(1) != 4)
      throw ShapeError("box targets must be [m,4]");
  }
}

Var intra_loss(Tape& tape, Var p, Var p_hat) {
  require_paired(tape.value(p), tape.value(p_hat));
  const std::int64_t m = tape.value(p).dim(0);
  Var d = tape.sub(p, p_hat);
  return tape.scale(tape.sum(tape.mul(d, d)), 1.0 / static_cast<double>(m));
}

Var inter_loss(Tape& tape, Var p, Var p_hat, bool include_positive) {
  require_paired(tape.value(p), tape.value(p_hat));
  if (tape.value(p).dim(0) < 2) throw DomainError("inter_loss: at least 2 proposals required");
  Var pn = tape.row_l2_normalize(p);
  Var qn = tape.row_l2_normalize(p_hat);
  Var sim = tape.matmul(pn, tape.transpose(qn));  // sim(i,j) = cos(P_i, P_hat_j)
  return tape.infonce(sim, include_positive);
}

std::pair<Var, Var> head_losses(Tape& tape, Var p, Var p_hat, const std::vector<int>& labels,
                                const std::optional<Tensor>& box_targets,
                                const HeadVars& heads) {
  require_paired(tape.value(p), tape.value(p_hat));
  if (static_cast<std::int64_t>(labels.size()) != tape.value(p).dim(0))
    throw ShapeError("head_losses: label count does not match batch");

  // Both batches contribute with equal weight. When the evolved view is the
  // very same node (evolution disabled), the half-sum of two identical terms
  // collapses to the single-batch loss, so compute just that branch.
  const bool same = p_hat.id == p.id;

  Var logits_p = tape.add_rowvec(tape.matmul(p, heads.cls_w), heads.cls_b);
  Var l_cls = tape.softmax_xent(logits_p, labels);
  if (!same) {
    Var logits_q = tape.add_rowvec(tape.matmul(p_hat, heads.cls_w), heads.cls_b);
    l_cls = tape.scale(tape.add(l_cls, tape.softmax_xent(logits_q, labels)), 0.5);
  }

  Var l_reg = tape.constant(Tensor::scalar(0.0));
  if (box_targets) {
    Var reg_p = tape.add_rowvec(tape.matmul(p, heads.reg_w), heads.reg_b);
    l_reg = tape.smooth_l1(reg_p, *box_targets);
    if (!same) {
      Var reg_q = tape.add_rowvec(tape.matmul(p_hat, heads.reg_w), heads.reg_b);
      l_reg = tape.scale(tape.add(l_reg, tape.smooth_l1(reg_q, *box_targets)), 0.5);
    }
  }
  return {l_cls, l_reg};
}

LossBundleVars total_loss(Tape& tape, Var l_intra, Var l_inter, Var l_cls, Var l_reg,
                          double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw DomainError("total_loss: balancing coefficients must be >= 0");
  LossBundleVars b;
  b.l_intra = l_intra;
  b.l_inter = l_inter;
  b.l_cls = l_cls;
  b.l_reg = l_reg;
  b.l_align = tape.add(tape.scale(l_intra, lambda1), tape.scale(l_inter, lambda2));
  b.l_total = tape.add(tape.add(l_cls, l_reg), b.l_align);
  return b;
}

LossBundle read_bundle(const Tape& tape, const LossBundleVars& b) {
  LossBundle out;
  out.l_intra = tape.value(b.l_intra)[0];
  out.l_inter = tape.value(b.l_inter)[0];
  out.l_cls = tape.value(b.l_cls)[0];
  out.l_reg = tape.value(b.l_reg)[0];
  out.l_align = tape.value(b.l_align)[0];
  out.l_total = tape.value(b.l_total)[0];
  return out;
}

}  // namespace ltfe
