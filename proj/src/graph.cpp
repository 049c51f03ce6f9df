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

#include "ltfe/graph.hpp"

#include <algorithm>
#include <cmath>

#include "ltfe/kernels.hpp"

namespace ltfe {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

std::int64_t wrap_circular(std::int64_t i, std::int64_t n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// Mirror without edge duplication (period 2(n-1)); n == 1 collapses to 0.
std::int64_t wrap_reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::int64_t wrap(std::int64_t i, std::int64_t n, Padding pad) {
  return pad == Padding::circular ? wrap_circular(i, n) : wrap_reflect(i, n);
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Horizontal depthwise pass: out[y][x][ch] += tap * in[y][wrap(x+shift)][ch].
// Circular shifts decompose into two contiguous spans; reflect falls back to
// per-column indexing.
void hpass(const double* in, double* out, std::int64_t h, std::int64_t w, std::int64_t c,
           const std::vector<double>& taps, std::int64_t r, Padding pad) {
  const std::int64_t row = w * c;
  for (std::int64_t y = 0; y < h; ++y) {
    const double* irow = in + y * row;
    double* orow = out + y * row;
    for (std::int64_t k = -r; k <= r; ++k) {
      const double tap = taps[static_cast<std::size_t>(k + r)];
      if (pad == Padding::circular) {
        const std::int64_t s = wrap_circular(k, w);
        K().axpy(tap, irow + s * c, orow, static_cast<std::size_t>((w - s) * c));
        if (s > 0) K().axpy(tap, irow, orow + (w - s) * c, static_cast<std::size_t>(s * c));
      } else {
        for (std::int64_t x = 0; x < w; ++x)
          K().axpy(tap, irow + wrap_reflect(x + k, w) * c, orow + x * c,
                   static_cast<std::size_t>(c));
      }
    }
  }
}

// Adjoint of hpass: g_in[wrap(x+shift)][ch] += tap * g_out[x][ch].
void hpass_adjoint(const double* gout, double* gin, std::int64_t h, std::int64_t w,
                   std::int64_t c, const std::vector<double>& taps, std::int64_t r,
                   Padding pad) {
  const std::int64_t row = w * c;
  for (std::int64_t y = 0; y < h; ++y) {
    const double* grow = gout + y * row;
    double* irow = gin + y * row;
    for (std::int64_t k = -r; k <= r; ++k) {
      const double tap = taps[static_cast<std::size_t>(k + r)];
      if (pad == Padding::circular) {
        const std::int64_t s = wrap_circular(k, w);
        K().axpy(tap, grow, irow + s * c, static_cast<std::size_t>((w - s) * c));
        if (s > 0) K().axpy(tap, grow + (w - s) * c, irow, static_cast<std::size_t>(s * c));
      } else {
        for (std::int64_t x = 0; x < w; ++x)
          K().axpy(tap, grow + x * c, irow + wrap_reflect(x + k, w) * c,
                   static_cast<std::size_t>(c));
      }
    }
  }
}

// Vertical depthwise pass: out[y] += tap * in[wrap(y+shift)], whole rows.
void vpass(const double* in, double* out, std::int64_t h, std::int64_t w, std::int64_t c,
           const std::vector<double>& taps, std::int64_t r, Padding pad) {
  const std::int64_t row = w * c;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t k = -r; k <= r; ++k)
      K().axpy(taps[static_cast<std::size_t>(k + r)], in + wrap(y + k, h, pad) * row,
               out + y * row, static_cast<std::size_t>(row));
}

void vpass_adjoint(const double* gout, double* gin, std::int64_t h, std::int64_t w,
                   std::int64_t c, const std::vector<double>& taps, std::int64_t r,
                   Padding pad) {
  const std::int64_t row = w * c;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t k = -r; k <= r; ++k)
      K().axpy(taps[static_cast<std::size_t>(k + r)], gout + y * row,
               gin + wrap(y + k, h, pad) * row, static_cast<std::size_t>(row));
}

}  // namespace

Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&)> bwd) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(bwd);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  has_grad_.push_back(0);
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::param(Tensor v) { return emit(std::move(v), true, nullptr); }

Var Tape::constant(Tensor v) { return emit(std::move(v), false, nullptr); }

const Tensor& Tape::value(Var x) const { return v(x); }

bool Tape::requires_grad(Var x) const { return needs(x); }

Tensor Tape::grad(Var x) const {
  if (touched(x.id)) return grads_[static_cast<std::size_t>(x.id)];
  return Tensor::zeros_like(v(x));
}

Tensor& Tape::grad_buf(std::int32_t id) {
  auto idx = static_cast<std::size_t>(id);
  if (!has_grad_[idx]) {
    grads_[idx] = Tensor::zeros_like(nodes_[idx].value);
    has_grad_[idx] = 1;
  }
  return grads_[idx];
}

void Tape::backward(Var loss) {
  if (v(loss).size() != 1) throw ShapeError("backward() needs a scalar loss");
  std::fill(has_grad_.begin(), has_grad_.end(), 0);
  grad_buf(loss.id)[0] = 1.0;
  for (std::int32_t i = loss.id; i >= 0; --i) {
    auto idx = static_cast<std::size_t>(i);
    if (has_grad_[idx] && nodes_[idx].backward) nodes_[idx].backward(*this);
  }
}

// -- elementwise ------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  require(v(a).same_shape(v(b)), "add: shape mismatch " + v(a).shape_str() + " vs " + v(b).shape_str());
  Tensor out(v(a).shape());
  K().add(v(a).data(), v(b).data(), out.data(), static_cast<std::size_t>(out.size()));
  const auto ga = a.id, gb = b.id;
  auto self = emit(std::move(out), needs(a) || needs(b), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gb, id](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const auto n = static_cast<std::size_t>(g.size());
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad)
      K().axpy(1.0, g.data(), t.grad_buf(ga).data(), n);
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad)
      K().axpy(1.0, g.data(), t.grad_buf(gb).data(), n);
  };
  return self;
}

Var Tape::sub(Var a, Var b) {
  require(v(a).same_shape(v(b)), "sub: shape mismatch " + v(a).shape_str() + " vs " + v(b).shape_str());
  Tensor out(v(a).shape());
  K().sub(v(a).data(), v(b).data(), out.data(), static_cast<std::size_t>(out.size()));
  const auto ga = a.id, gb = b.id;
  auto self = emit(std::move(out), needs(a) || needs(b), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gb, id](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const auto n = static_cast<std::size_t>(g.size());
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad)
      K().axpy(1.0, g.data(), t.grad_buf(ga).data(), n);
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad)
      K().axpy(-1.0, g.data(), t.grad_buf(gb).data(), n);
  };
  return self;
}

Var Tape::mul(Var a, Var b) {
  require(v(a).same_shape(v(b)), "mul: shape mismatch " + v(a).shape_str() + " vs " + v(b).shape_str());
  Tensor out(v(a).shape());
  K().mul(v(a).data(), v(b).data(), out.data(), static_cast<std::size_t>(out.size()));
  const auto ga = a.id, gb = b.id;
  auto self = emit(std::move(out), needs(a) || needs(b), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gb, id](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const auto n = static_cast<std::size_t>(g.size());
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad)
      K().madd(g.data(), t.v(Var{gb}).data(), t.grad_buf(ga).data(), n);
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad)
      K().madd(g.data(), t.v(Var{ga}).data(), t.grad_buf(gb).data(), n);
  };
  return self;
}

Var Tape::div(Var a, Var b) {
  require(v(a).same_shape(v(b)), "div: shape mismatch " + v(a).shape_str() + " vs " + v(b).shape_str());
  Tensor out(v(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = v(a)[i] / v(b)[i];
  const auto ga = a.id, gb = b.id;
  auto self = emit(std::move(out), needs(a) || needs(b), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gb, id](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const Tensor& bv = t.v(Var{gb});
    const Tensor& ov = t.v(Var{id});
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad) {
      Tensor& dst = t.grad_buf(ga);
      for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i] / bv[i];
    }
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad) {
      Tensor& dst = t.grad_buf(gb);
      for (std::int64_t i = 0; i < g.size(); ++i) dst[i] -= g[i] * ov[i] / bv[i];
    }
  };
  return self;
}

Var Tape::neg(Var a) {
  Tensor out(v(a).shape());
  K().neg(v(a).data(), out.data(), static_cast<std::size_t>(out.size()));
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    K().axpy(-1.0, g.data(), t.grad_buf(ga).data(), static_cast<std::size_t>(g.size()));
  };
  return self;
}

Var Tape::relu(Var a) {
  Tensor out(v(a).shape());
  const Tensor& x = v(a);
  // Subgradient at 0 is 0 by convention.
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    const Tensor& x2 = t.v(Var{ga});
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (x2[i] > 0.0) dst[i] += g[i];
  };
  return self;
}

Var Tape::tanh_op(Var a) {
  Tensor out(v(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(v(a)[i]);
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    const Tensor& y = t.v(Var{id});
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return self;
}

Var Tape::sigmoid(Var a) {
  Tensor out(v(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v(a)[i]));
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    const Tensor& y = t.v(Var{id});
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return self;
}

Var Tape::exp_op(Var a) {
  Tensor out(v(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(v(a)[i]);
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    const Tensor& y = t.v(Var{id});
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i];
  };
  return self;
}

Var Tape::scale(Var x, double c) {
  Tensor out(v(x).shape());
  K().scale(c, v(x).data(), out.data(), static_cast<std::size_t>(out.size()));
  const auto gx = x.id;
  auto self = emit(std::move(out), needs(x), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gx, id, c](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gx)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    K().axpy(c, g.data(), t.grad_buf(gx).data(), static_cast<std::size_t>(g.size()));
  };
  return self;
}

Var Tape::scale_by(Var x, Var s) {
  require(v(s).size() == 1, "scale_by: scale must be scalar");
  const double sv = v(s)[0];
  Tensor out(v(x).shape());
  K().scale(sv, v(x).data(), out.data(), static_cast<std::size_t>(out.size()));
  const auto gx = x.id, gs = s.id;
  auto self = emit(std::move(out), needs(x) || needs(s), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gx, gs, id, sv](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const auto n = static_cast<std::size_t>(g.size());
    if (t.nodes_[static_cast<std::size_t>(gx)].requires_grad)
      K().axpy(sv, g.data(), t.grad_buf(gx).data(), n);
    if (t.nodes_[static_cast<std::size_t>(gs)].requires_grad)
      t.grad_buf(gs)[0] += K().dot(g.data(), t.v(Var{gx}).data(), n);
  };
  return self;
}

// -- linear algebra -----------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  require(v(a).rank() == 2 && v(b).rank() == 2, "matmul: rank-2 operands required");
  require(v(a).dim(1) == v(b).dim(0), "matmul: inner dimensions disagree, " +
                                          v(a).shape_str() + " x " + v(b).shape_str());
  const std::int64_t m = v(a).dim(0), kk = v(a).dim(1), n = v(b).dim(1);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < kk; ++p)
      K().axpy(v(a)[i * kk + p], v(b).data() + p * n, out.data() + i * n,
               static_cast<std::size_t>(n));
  const auto ga = a.id, gb = b.id;
  auto self = emit(std::move(out), needs(a) || needs(b), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gb, id, m, kk, n](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const Tensor& av = t.v(Var{ga});
    const Tensor& bv = t.v(Var{gb});
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad) {
      Tensor& da = t.grad_buf(ga);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < kk; ++p)
          da[i * kk + p] += K().dot(g.data() + i * n, bv.data() + p * n,
                                    static_cast<std::size_t>(n));
    }
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad) {
      Tensor& db = t.grad_buf(gb);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < kk; ++p)
          K().axpy(av[i * kk + p], g.data() + i * n, db.data() + p * n,
                   static_cast<std::size_t>(n));
    }
  };
  return self;
}

Var Tape::vecmat(Var x, Var m) {
  require(v(x).rank() == 1 && v(m).rank() == 2, "vecmat: vector and matrix required");
  require(v(x).dim(0) == v(m).dim(0), "vecmat: inner dimensions disagree, " +
                                          v(x).shape_str() + " x " + v(m).shape_str());
  const std::int64_t kk = v(m).dim(0), n = v(m).dim(1);
  Tensor out({n});
  for (std::int64_t p = 0; p < kk; ++p)
    K().axpy(v(x)[p], v(m).data() + p * n, out.data(), static_cast<std::size_t>(n));
  const auto gx = x.id, gm = m.id;
  auto self = emit(std::move(out), needs(x) || needs(m), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gx, gm, id, kk, n](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const Tensor& xv = t.v(Var{gx});
    const Tensor& mv = t.v(Var{gm});
    if (t.nodes_[static_cast<std::size_t>(gx)].requires_grad) {
      Tensor& dx = t.grad_buf(gx);
      for (std::int64_t p = 0; p < kk; ++p)
        dx[p] += K().dot(g.data(), mv.data() + p * n, static_cast<std::size_t>(n));
    }
    if (t.nodes_[static_cast<std::size_t>(gm)].requires_grad) {
      Tensor& dm = t.grad_buf(gm);
      for (std::int64_t p = 0; p < kk; ++p)
        K().axpy(xv[p], g.data(), dm.data() + p * n, static_cast<std::size_t>(n));
    }
  };
  return self;
}

Var Tape::transpose(Var a) {
  require(v(a).rank() == 2, "transpose: rank-2 required");
  const std::int64_t m = v(a).dim(0), n = v(a).dim(1);
  Tensor out({n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = v(a)[i * n + j];
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id, m, n](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
  };
  return self;
}

Var Tape::add_rowvec(Var a, Var x) {
  require(v(a).rank() == 2 && v(x).rank() == 1 && v(a).dim(1) == v(x).dim(0),
          "add_rowvec: [m,n] + [n] required, got " + v(a).shape_str() + " + " + v(x).shape_str());
  const std::int64_t m = v(a).dim(0), n = v(a).dim(1);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    K().add(v(a).data() + i * n, v(x).data(), out.data() + i * n, static_cast<std::size_t>(n));
  const auto ga = a.id, gx = x.id;
  auto self = emit(std::move(out), needs(a) || needs(x), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gx, id, m, n](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad)
      K().axpy(1.0, g.data(), t.grad_buf(ga).data(), static_cast<std::size_t>(m * n));
    if (t.nodes_[static_cast<std::size_t>(gx)].requires_grad) {
      Tensor& dx = t.grad_buf(gx);
      for (std::int64_t i = 0; i < m; ++i)
        K().axpy(1.0, g.data() + i * n, dx.data(), static_cast<std::size_t>(n));
    }
  };
  return self;
}

Var Tape::row_l2_normalize(Var a) {
  require(v(a).rank() == 2, "row_l2_normalize: rank-2 required");
  const std::int64_t m = v(a).dim(0), n = v(a).dim(1);
  Tensor out({m, n});
  std::vector<double> norms(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    const double ss = K().sumsq(v(a).data() + i * n, static_cast<std::size_t>(n));
    if (ss == 0.0) throw NumericalError("row_l2_normalize: zero-norm row " + std::to_string(i));
    const double nm = std::sqrt(ss);
    norms[static_cast<std::size_t>(i)] = nm;
    K().scale(1.0 / nm, v(a).data() + i * n, out.data() + i * n, static_cast<std::size_t>(n));
  }
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id, m, n, norms](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    const Tensor& u = t.v(Var{id});
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < m; ++i) {
      const double nm = norms[static_cast<std::size_t>(i)];
      const double gu = K().dot(g.data() + i * n, u.data() + i * n, static_cast<std::size_t>(n));
      K().axpy(1.0 / nm, g.data() + i * n, dst.data() + i * n, static_cast<std::size_t>(n));
      K().axpy(-gu / nm, u.data() + i * n, dst.data() + i * n, static_cast<std::size_t>(n));
    }
  };
  return self;
}

// -- shape --------------------------------------------------------------------

Var Tape::concat(Var a, Var b) {
  require(v(a).rank() == 1 && v(b).rank() == 1, "concat: rank-1 operands required");
  const std::int64_t p = v(a).dim(0), q = v(b).dim(0);
  Tensor out({p + q});
  std::copy_n(v(a).data(), p, out.data());
  std::copy_n(v(b).data(), q, out.data() + p);
  const auto ga = a.id, gb = b.id;
  auto self = emit(std::move(out), needs(a) || needs(b), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, gb, id, p, q](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    if (t.nodes_[static_cast<std::size_t>(ga)].requires_grad)
      K().axpy(1.0, g.data(), t.grad_buf(ga).data(), static_cast<std::size_t>(p));
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad)
      K().axpy(1.0, g.data() + p, t.grad_buf(gb).data(), static_cast<std::size_t>(q));
  };
  return self;
}

Var Tape::reshape(Var a, std::vector<std::int64_t> shape) {
  Tensor out(std::move(shape), v(a).raw());
  require(out.size() == v(a).size(), "reshape: element count mismatch");
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    K().axpy(1.0, g.data(), t.grad_buf(ga).data(), static_cast<std::size_t>(g.size()));
  };
  return self;
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows: empty row list");
  const std::int64_t n = v(rows[0]).dim(0);
  bool any_grad = false;
  for (Var r : rows) {
    require(v(r).rank() == 1 && v(r).dim(0) == n, "stack_rows: inconsistent row length");
    any_grad = any_grad || needs(r);
  }
  const std::int64_t m = static_cast<std::int64_t>(rows.size());
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    std::copy_n(v(rows[static_cast<std::size_t>(i)]).data(), n, out.data() + i * n);
  std::vector<std::int32_t> ids;
  ids.reserve(rows.size());
  for (Var r : rows) ids.push_back(r.id);
  auto self = emit(std::move(out), any_grad, nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ids, id, n](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.nodes_[static_cast<std::size_t>(ids[i])].requires_grad)
        K().axpy(1.0, g.data() + static_cast<std::int64_t>(i) * n, t.grad_buf(ids[i]).data(),
                 static_cast<std::size_t>(n));
  };
  return self;
}

// -- spatial --------------------------------------------------------------------

Var Tape::conv2d(Var input, Var kernel, Padding pad) {
  const Tensor& in = v(input);
  const Tensor& kr = v(kernel);
  require(in.rank() == 3, "conv2d: input must be [h,w,c], got " + in.shape_str());
  require(kr.rank() == 4, "conv2d: kernel must be [k,k,ci,co], got " + kr.shape_str());
  require(kr.dim(0) == kr.dim(1), "conv2d: kernel must be square");
  require(kr.dim(0) % 2 == 1, "conv2d: kernel spatial size must be odd");
  require(kr.dim(2) == in.dim(2), "conv2d: kernel input channels " + std::to_string(kr.dim(2)) +
                                      " != input channels " + std::to_string(in.dim(2)));
  const std::int64_t h = in.dim(0), w = in.dim(1), ci = in.dim(2);
  const std::int64_t k = kr.dim(0), co = kr.dim(3), r = k / 2;

  Tensor out({h, w, co});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double* opix = out.data() + (y * w + x) * co;
      for (std::int64_t ky = 0; ky < k; ++ky) {
        const std::int64_t iy = wrap(y + ky - r, h, pad);
        for (std::int64_t kx = 0; kx < k; ++kx) {
          const std::int64_t ix = wrap(x + kx - r, w, pad);
          const double* ipix = in.data() + (iy * w + ix) * ci;
          const double* kslice = kr.data() + ((ky * k + kx) * ci) * co;
          for (std::int64_t c = 0; c < ci; ++c)
            K().axpy(ipix[c], kslice + c * co, opix, static_cast<std::size_t>(co));
        }
      }
    }

  const auto gi = input.id, gk = kernel.id;
  auto self = emit(std::move(out), needs(input) || needs(kernel), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gi, gk, id, h, w, ci, k, co, r, pad](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    const Tensor& in2 = t.v(Var{gi});
    const Tensor& kr2 = t.v(Var{gk});
    const bool want_in = t.nodes_[static_cast<std::size_t>(gi)].requires_grad;
    const bool want_k = t.nodes_[static_cast<std::size_t>(gk)].requires_grad;
    Tensor* din = want_in ? &t.grad_buf(gi) : nullptr;
    Tensor* dkr = want_k ? &t.grad_buf(gk) : nullptr;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const double* gpix = g.data() + (y * w + x) * co;
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t iy = wrap(y + ky - r, h, pad);
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t ix = wrap(x + kx - r, w, pad);
            const double* ipix = in2.data() + (iy * w + ix) * ci;
            const double* kslice = kr2.data() + ((ky * k + kx) * ci) * co;
            for (std::int64_t c = 0; c < ci; ++c) {
              if (want_in)
                (*din)[(iy * w + ix) * ci + c] +=
                    K().dot(gpix, kslice + c * co, static_cast<std::size_t>(co));
              if (want_k)
                K().axpy(ipix[c], gpix, dkr->data() + ((ky * k + kx) * ci + c) * co,
                         static_cast<std::size_t>(co));
            }
          }
        }
      }
  };
  return self;
}

Var Tape::blur2d(Var input, std::vector<double> taps, Padding pad) {
  const Tensor& in = v(input);
  require(in.rank() == 3, "blur2d: input must be [h,w,c], got " + in.shape_str());
  require(taps.size() % 2 == 1, "blur2d: tap count must be odd");
  const std::int64_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  const std::int64_t r = static_cast<std::int64_t>(taps.size() / 2);

  Tensor mid({h, w, c});
  hpass(in.data(), mid.data(), h, w, c, taps, r, pad);
  Tensor out({h, w, c});
  vpass(mid.data(), out.data(), h, w, c, taps, r, pad);

  const auto gi = input.id;
  auto self = emit(std::move(out), needs(input), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gi, id, h, w, c, r, pad, taps = std::move(taps)](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gi)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    Tensor gmid({h, w, c});
    vpass_adjoint(g.data(), gmid.data(), h, w, c, taps, r, pad);
    hpass_adjoint(gmid.data(), t.grad_buf(gi).data(), h, w, c, taps, r, pad);
  };
  return self;
}

Var Tape::add_channels(Var map, Var bias) {
  const Tensor& in = v(map);
  require(in.rank() == 3 && v(bias).rank() == 1 && v(bias).dim(0) == in.dim(2),
          "add_channels: [h,w,c] + [c] required");
  const std::int64_t pixels = in.dim(0) * in.dim(1), c = in.dim(2);
  Tensor out(in.shape());
  for (std::int64_t p = 0; p < pixels; ++p)
    K().add(in.data() + p * c, v(bias).data(), out.data() + p * c, static_cast<std::size_t>(c));
  const auto gm = map.id, gb = bias.id;
  auto self = emit(std::move(out), needs(map) || needs(bias), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gm, gb, id, pixels, c](Tape& t) {
    const Tensor& g = t.grad_ref(id);
    if (t.nodes_[static_cast<std::size_t>(gm)].requires_grad)
      K().axpy(1.0, g.data(), t.grad_buf(gm).data(), static_cast<std::size_t>(pixels * c));
    if (t.nodes_[static_cast<std::size_t>(gb)].requires_grad) {
      Tensor& db = t.grad_buf(gb);
      for (std::int64_t p = 0; p < pixels; ++p)
        K().axpy(1.0, g.data() + p * c, db.data(), static_cast<std::size_t>(c));
    }
  };
  return self;
}

Var Tape::mean_pool_spatial(Var map) {
  const Tensor& in = v(map);
  require(in.rank() == 3, "mean_pool_spatial: [h,w,c] required, got " + in.shape_str());
  const std::int64_t pixels = in.dim(0) * in.dim(1), c = in.dim(2);
  Tensor out({c});
  for (std::int64_t p = 0; p < pixels; ++p)
    K().axpy(1.0, in.data() + p * c, out.data(), static_cast<std::size_t>(c));
  K().scale(1.0 / static_cast<double>(pixels), out.data(), out.data(),
            static_cast<std::size_t>(c));
  const auto gm = map.id;
  auto self = emit(std::move(out), needs(map), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gm, id, pixels, c](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gm)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    Tensor gs({c});
    K().scale(1.0 / static_cast<double>(pixels), g.data(), gs.data(), static_cast<std::size_t>(c));
    Tensor& dst = t.grad_buf(gm);
    for (std::int64_t p = 0; p < pixels; ++p)
      K().axpy(1.0, gs.data(), dst.data() + p * c, static_cast<std::size_t>(c));
  };
  return self;
}

Var Tape::roi_mean_pool(Var map, std::int64_t y0, std::int64_t y1, std::int64_t x0,
                        std::int64_t x1) {
  const Tensor& in = v(map);
  require(in.rank() == 3, "roi_mean_pool: [h,w,c] required");
  const std::int64_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  require(0 <= y0 && y0 < y1 && y1 <= h && 0 <= x0 && x0 < x1 && x1 <= w,
          "roi_mean_pool: rectangle out of bounds");
  const std::int64_t count = (y1 - y0) * (x1 - x0);
  Tensor out({c});
  for (std::int64_t y = y0; y < y1; ++y)
    for (std::int64_t x = x0; x < x1; ++x)
      K().axpy(1.0, in.data() + (y * w + x) * c, out.data(), static_cast<std::size_t>(c));
  K().scale(1.0 / static_cast<double>(count), out.data(), out.data(), static_cast<std::size_t>(c));
  const auto gm = map.id;
  auto self = emit(std::move(out), needs(map), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gm, id, y0, y1, x0, x1, w, c, count](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gm)].requires_grad) return;
    const Tensor& g = t.grad_ref(id);
    Tensor gs({c});
    K().scale(1.0 / static_cast<double>(count), g.data(), gs.data(), static_cast<std::size_t>(c));
    Tensor& dst = t.grad_buf(gm);
    for (std::int64_t y = y0; y < y1; ++y)
      for (std::int64_t x = x0; x < x1; ++x)
        K().axpy(1.0, gs.data(), dst.data() + (y * w + x) * c, static_cast<std::size_t>(c));
  };
  return self;
}

// -- reductions -------------------------------------------------------------------

Var Tape::sum(Var a) {
  require(v(a).size() > 0, "sum: empty tensor");
  Tensor out = Tensor::scalar(K().sum(v(a).data(), static_cast<std::size_t>(v(a).size())));
  const auto ga = a.id;
  auto self = emit(std::move(out), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    const double g0 = t.grad_ref(id)[0];
    Tensor& dst = t.grad_buf(ga);
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += g0;
  };
  return self;
}

Var Tape::l2_norm(Var a) {
  require(v(a).size() > 0, "l2_norm: empty tensor");
  const double norm = std::sqrt(K().sumsq(v(a).data(), static_cast<std::size_t>(v(a).size())));
  const auto ga = a.id;
  auto self = emit(Tensor::scalar(norm), needs(a), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id, norm](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    if (norm == 0.0) return;  // subgradient 0 at the origin
    const double g0 = t.grad_ref(id)[0];
    const Tensor& x = t.v(Var{ga});
    K().axpy(g0 / norm, x.data(), t.grad_buf(ga).data(), static_cast<std::size_t>(x.size()));
  };
  return self;
}

Var Tape::maxn(const std::vector<Var>& xs) {
  require(!xs.empty(), "maxn: empty argument list");
  std::size_t arg = 0;
  double best = v(xs[0])[0];
  bool any_grad = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(v(xs[i]).size() == 1, "maxn: scalar arguments required");
    any_grad = any_grad || needs(xs[i]);
    if (v(xs[i])[0] > best) {
      best = v(xs[i])[0];
      arg = i;
    }
  }
  const auto ga = xs[arg].id;
  auto self = emit(Tensor::scalar(best), any_grad, nullptr);
  const auto id = self.id;
  nodes_.back().backward = [ga, id](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(ga)].requires_grad) return;
    t.grad_buf(ga)[0] += t.grad_ref(id)[0];
  };
  return self;
}

// -- losses --------------------------------------------------------------------------

Var Tape::softmax_xent(Var logits, const std::vector<int>& labels) {
  const Tensor& z = v(logits);
  require(z.rank() == 2, "softmax_xent: [m,C] logits required");
  const std::int64_t m = z.dim(0), C = z.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == m, "softmax_xent: label count mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= C)
      throw DomainError("softmax_xent: label " + std::to_string(lab) + " outside [0," +
                        std::to_string(C) + ")");
  Tensor probs({m, C});
  double loss = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = z.data() + i * C;
    double mx = row[0];
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double zsum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
      const double e = std::exp(row[c] - mx);
      probs[i * C + c] = e;
      zsum += e;
    }
    for (std::int64_t c = 0; c < C; ++c) probs[i * C + c] /= zsum;
    loss += mx + std::log(zsum) - row[labels[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(m);
  const auto gl = logits.id;
  auto self = emit(Tensor::scalar(loss), needs(logits), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gl, id, m, C, labels, probs = std::move(probs)](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gl)].requires_grad) return;
    const double g0 = t.grad_ref(id)[0] / static_cast<double>(m);
    Tensor& dst = t.grad_buf(gl);
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t c = 0; c < C; ++c) dst[i * C + c] += g0 * probs[i * C + c];
      dst[i * C + labels[static_cast<std::size_t>(i)]] -= g0;
    }
  };
  return self;
}

Var Tape::smooth_l1(Var pred, const Tensor& target) {
  const Tensor& p = v(pred);
  require(p.same_shape(target), "smooth_l1: prediction/target shape mismatch");
  require(p.rank() == 2, "smooth_l1: [m,k] required");
  const std::int64_t m = p.dim(0);
  double loss = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - target[i];
    loss += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
  }
  loss /= static_cast<double>(m);
  const auto gp = pred.id;
  auto self = emit(Tensor::scalar(loss), needs(pred), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gp, id, m, target](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gp)].requires_grad) return;
    const double g0 = t.grad_ref(id)[0] / static_cast<double>(m);
    const Tensor& pv = t.v(Var{gp});
    Tensor& dst = t.grad_buf(gp);
    for (std::int64_t i = 0; i < pv.size(); ++i) {
      const double d = pv[i] - target[i];
      dst[i] += g0 * (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0));
    }
  };
  return self;
}

Var Tape::infonce(Var sim, bool include_positive) {
  const Tensor& s = v(sim);
  require(s.rank() == 2 && s.dim(0) == s.dim(1), "infonce: square similarity matrix required");
  const std::int64_t m = s.dim(0);
  if (m < 2) throw DomainError("infonce: at least 2 rows required");
  double loss = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = s.data() + i * m;
    double mx = -1e300;
    for (std::int64_t j = 0; j < m; ++j)
      if ((include_positive || j != i) && row[j] > mx) mx = row[j];
    double zsum = 0.0;
    for (std::int64_t j = 0; j < m; ++j)
      if (include_positive || j != i) zsum += std::exp(row[j] - mx);
    loss += -row[i] + mx + std::log(zsum);
  }
  loss /= static_cast<double>(m);
  const auto gs = sim.id;
  auto self = emit(Tensor::scalar(loss), needs(sim), nullptr);
  const auto id = self.id;
  nodes_.back().backward = [gs, id, m, include_positive](Tape& t) {
    if (!t.nodes_[static_cast<std::size_t>(gs)].requires_grad) return;
    const double g0 = t.grad_ref(id)[0] / static_cast<double>(m);
    const Tensor& sv = t.v(Var{gs});
    Tensor& dst = t.grad_buf(gs);
    for (std::int64_t i = 0; i < m; ++i) {
      const double* row = sv.data() + i * m;
      double mx = -1e300;
      for (std::int64_t j = 0; j < m; ++j)
        if ((include_positive || j != i) && row[j] > mx) mx = row[j];
      double zsum = 0.0;
      for (std::int64_t j = 0; j < m; ++j)
        if (include_positive || j != i) zsum += std::exp(row[j] - mx);
      for (std::int64_t j = 0; j < m; ++j)
        if (include_positive || j != i)
          dst[i * m + j] += g0 * std::exp(row[j] - mx) / zsum;
      dst[i * m + i] -= g0;
    }
  };
  return self;
}

// -- gradient checking ---------------------------------------------------------------

double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<Tensor>& params, double eps) {
  auto eval = [&f](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Var> vs;
    vs.reserve(ps.size());
    for (const Tensor& p : ps) vs.push_back(t.param(p));
    Var out = f(t, vs);
    if (t.value(out).size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    const double y = t.value(out)[0];
    if (!std::isfinite(y)) throw NumericalError("grad_check: non-finite evaluation");
    return y;
  };

  Tape t;
  std::vector<Var> vs;
  vs.reserve(params.size());
  for (const Tensor& p : params) vs.push_back(t.param(p));
  Var out = f(t, vs);
  if (t.value(out).size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  if (!std::isfinite(t.value(out)[0])) throw NumericalError("grad_check: non-finite evaluation");
  t.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Var v_ : vs) analytic.push_back(t.grad(v_));

  std::vector<Tensor> work = params;
  double max_rel = 0.0;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::int64_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + eps;
      const double fp = eval(work);
      work[p][i] = orig - eps;
      const double fm = eval(work);
      work[p][i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      if (!std::isfinite(numeric)) throw NumericalError("grad_check: non-finite difference");
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ltfe
