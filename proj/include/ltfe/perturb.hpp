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

#include <string>
#include <utility>
#include <vector>

#include "ltfe/graph.hpp"
#include "ltfe/rng.hpp"
#include "ltfe/tensor.hpp"

namespace ltfe {

/// Perturbation schedule: noise intensity decays as alpha0 * exp(-lambda * t),
/// blur width grows as sigma0 * gamma^t, for t = 1..steps.
struct EvolutionSchedule {
  double alpha0 = 0.2;
  double lambda = 0.2;
  double sigma0 = 1.0;
  double gamma = 1.2;
  int steps = 8;

  void validate() const;
};

/// (alpha_t, sigma_t) for 1 <= t <= s.steps; throws DomainError outside.
std::pair<double, double> schedule_at(const EvolutionSchedule& s, int t);

/// Truncated, normalized isotropic Gaussian. taps2d(i,j) is proportional to
/// exp(-(i^2+j^2) / (2 sigma^2)) on the integer grid |i|,|j| <= radius and
/// sums to 1; taps1d is the matching separable factor.
struct GaussianKernel {
  int radius = 0;
  std::vector<double> taps1d;
  Tensor taps2d;
};

/// radius = min(ceil(3 sigma), r_max); sigma is clamped to >= 1e-3.
GaussianKernel gaussian_kernel(double sigma, int r_max = 1 << 20);

enum class InjectionStrategy { progressive, equal_step, one_shot };

std::string strategy_name(InjectionStrategy s);
InjectionStrategy parse_strategy(const std::string& name);  // DomainError on unknown

struct EvolveOptions {
  InjectionStrategy strategy = InjectionStrategy::progressive;
  Padding padding = Padding::circular;
  /// Add the (alpha-scaled, center-placed, zero-padded) blur kernel itself
  /// instead of a blurred noise field.
  bool literal_eq1 = false;
};

/// Iterated blur + noise starting from f0, returning the T perturbed maps.
/// progressive: F_t = blur(F_{t-1}, sigma_t) + alpha_t * blur(eps_t, sigma_t)
/// with fresh unit-Gaussian eps_t. equal_step uses the mean alpha and the
/// sigma whose T-fold repetition matches the progressive cumulative blur
/// variance each step. one_shot applies the whole perturbation once
/// (sigma_total = sqrt(sum sigma_t^2), alpha_T) and holds the result.
std::vector<Var> evolve_sequence(Tape& tape, Var f0, const EvolutionSchedule& s,
                                 const EvolveOptions& opt, Rng& rng);

}  // namespace ltfe
