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

#include "ltfe/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltfe {

namespace {

constexpr double kSigmaMin = 1e-3;

// Center-placed zero-padding of the 2D kernel into a [h,w,c] map, every
// channel identical. This is the literal reading of adding the kernel to a
// feature map of a different shape.
Tensor pad_kernel_to_map(const GaussianKernel& g, std::int64_t h, std::int64_t w,
                         std::int64_t c) {
  Tensor out({h, w, c});
  const std::int64_t r = g.radius;
  const std::int64_t cy = h / 2, cx = w / 2;
  for (std::int64_t i = -r; i <= r; ++i) {
    const std::int64_t y = cy + i;
    if (y < 0 || y >= h) continue;
    for (std::int64_t j = -r; j <= r; ++j) {
      const std::int64_t x = cx + j;
      if (x < 0 || x >= w) continue;
      const double tap = g.taps2d.at(i + r, j + r);
      for (std::int64_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = tap;
    }
  }
  return out;
}

Var perturb_step(Tape& tape, Var prev, double alpha, double sigma, const EvolveOptions& opt,
                 std::int64_t h, std::int64_t w, std::int64_t c, int r_max, Rng& rng) {
  const GaussianKernel g = gaussian_kernel(sigma, r_max);
  Var blurred = tape.blur2d(prev, g.taps1d, opt.padding);
  Var next = blurred;
  if (alpha != 0.0) {
    if (opt.literal_eq1) {
      Var kmap = tape.constant(pad_kernel_to_map(g, h, w, c));
      next = tape.add(blurred, tape.scale(kmap, alpha));
    } else {
      Tensor eps({h, w, c});
      rng.fill_normal(eps);
      Var noise = tape.blur2d(tape.constant(std::move(eps)), g.taps1d, opt.padding);
      next = tape.add(blurred, tape.scale(noise, alpha));
    }
  }
  if (!tape.value(next).all_finite())
    throw NumericalError("evolve_sequence: non-finite intermediate state");
  return next;
}

}  // namespace

void EvolutionSchedule::validate() const {
  if (alpha0 < 0.0) throw DomainError("schedule: alpha0 must be >= 0");
  if (lambda < 0.0) throw DomainError("schedule: lambda must be >= 0");
  if (sigma0 <= 0.0) throw DomainError("schedule: sigma0 must be > 0");
  if (gamma < 1.0) throw DomainError("schedule: gamma must be >= 1");
  if (steps < 1) throw DomainError("schedule: step count must be >= 1");
}

std::pair<double, double> schedule_at(const EvolutionSchedule& s, int t) {
  s.validate();
  if (t < 1 || t > s.steps)
    throw DomainError("schedule_at: t = " + std::to_string(t) + " outside [1," +
                      std::to_string(s.steps) + "]");
  const double alpha_t = s.alpha0 * std::exp(-s.lambda * static_cast<double>(t));
  const double sigma_t = s.sigma0 * std::pow(s.gamma, static_cast<double>(t));
  return {alpha_t, sigma_t};
}

GaussianKernel gaussian_kernel(double sigma, int r_max) {
  if (sigma <= 0.0) throw DomainError("gaussian_kernel: sigma must be > 0");
  if (r_max < 1) throw DomainError("gaussian_kernel: r_max must be >= 1");
  sigma = std::max(sigma, kSigmaMin);
  const int r = std::min(static_cast<int>(std::ceil(3.0 * sigma)), r_max);
  const std::int64_t k = 2 * static_cast<std::int64_t>(r) + 1;

  GaussianKernel g;
  g.radius = r;
  g.taps1d.resize(static_cast<std::size_t>(k));
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double sum1 = 0.0;
  for (std::int64_t i = -r; i <= r; ++i) {
    const double v = std::max(std::exp(-static_cast<double>(i * i) * inv2s2),
                              std::numeric_limits<double>::min());
    g.taps1d[static_cast<std::size_t>(i + r)] = v;
    sum1 += v;
  }
  for (double& v : g.taps1d) v /= sum1;

  g.taps2d = Tensor({k, k});
  double sum2 = 0.0;
  for (std::int64_t i = -r; i <= r; ++i)
    for (std::int64_t j = -r; j <= r; ++j) {
      const double v = std::max(std::exp(-static_cast<double>(i * i + j * j) * inv2s2),
                                std::numeric_limits<double>::min());
      g.taps2d.at(i + r, j + r) = v;
      sum2 += v;
    }
  for (std::int64_t i = 0; i < g.taps2d.size(); ++i) g.taps2d[i] /= sum2;
  return g;
}

std::string strategy_name(InjectionStrategy s) {
  switch (s) {
    case InjectionStrategy::progressive: return "progressive";
    case InjectionStrategy::equal_step: return "equal_step";
    case InjectionStrategy::one_shot: return "one_shot";
  }
  return "unknown";
}

InjectionStrategy parse_strategy(const std::string& name) {
  if (name == "progressive") return InjectionStrategy::progressive;
  if (name == "equal_step") return InjectionStrategy::equal_step;
  if (name == "one_shot") return InjectionStrategy::one_shot;
  throw DomainError("unknown injection strategy: " + name);
}

std::vector<Var> evolve_sequence(Tape& tape, Var f0, const EvolutionSchedule& s,
                                 const EvolveOptions& opt, Rng& rng) {
  s.validate();
  const Tensor& f = tape.value(f0);
  if (f.rank() != 3) throw ShapeError("evolve_sequence: feature map must be [h,w,c]");
  if (!f.all_finite()) throw NumericalError("evolve_sequence: non-finite input");
  const std::int64_t h = f.dim(0), w = f.dim(1), c = f.dim(2);
  const int r_max = std::max<int>(1, static_cast<int>(std::min(h, w) / 2));
  const int T = s.steps;

  std::vector<Var> seq;
  seq.reserve(static_cast<std::size_t>(T));

  switch (opt.strategy) {
    case InjectionStrategy::progressive: {
      Var prev = f0;
      for (int t = 1; t <= T; ++t) {
        auto [alpha_t, sigma_t] = schedule_at(s, t);
        prev = perturb_step(tape, prev, alpha_t, sigma_t, opt, h, w, c, r_max, rng);
        seq.push_back(prev);
      }
      break;
    }
    case InjectionStrategy::equal_step: {
      double alpha_sum = 0.0, var_sum = 0.0;
      for (int t = 1; t <= T; ++t) {
        auto [alpha_t, sigma_t] = schedule_at(s, t);
        alpha_sum += alpha_t;
        var_sum += sigma_t * sigma_t;
      }
      const double alpha_bar = alpha_sum / T;
      const double sigma_bar = std::sqrt(var_sum / T);
      Var prev = f0;
      for (int t = 1; t <= T; ++t) {
        prev = perturb_step(tape, prev, alpha_bar, sigma_bar, opt, h, w, c, r_max, rng);
        seq.push_back(prev);
      }
      break;
    }
    case InjectionStrategy::one_shot: {
      double var_sum = 0.0;
      for (int t = 1; t <= T; ++t) {
        auto [alpha_t, sigma_t] = schedule_at(s, t);
        (void)alpha_t;
        var_sum += sigma_t * sigma_t;
      }
      const double alpha_T = schedule_at(s, T).first;
      const double sigma_total = std::sqrt(var_sum);
      Var shot = perturb_step(tape, f0, alpha_T, sigma_total, opt, h, w, c, r_max, rng);
      for (int t = 1; t <= T; ++t) seq.push_back(shot);
      break;
    }
  }
  return seq;
}

}  // namespace ltfe
