// Copyright 2026 The fedbat Authors.
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

#ifndef FEDBAT_BINARIZER_HPP
#define FEDBAT_BINARIZER_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "fedbat/rng.hpp"
#include "fedbat/tensor.hpp"

namespace fedbat {

// Learnable step size, reparameterized as alpha = alpha' * exp(rho * alpha_e)
// so the effective step size stays positive for every finite alpha_e. The
// exponent alpha_e is the parameter the optimizer touches; rho regulates how
// fast it moves.
struct StepSizeParam {
  double alpha_prime = 1.0;  // initial magnitude, > 0
  double alpha_e = 0.0;      // learnable exponent, starts at 0
  double rho = 0.0;          // pace coefficient, >= 0
};

// alpha' * exp(rho * alpha_e), strictly positive.
double effective_alpha(const StepSizeParam& step);

// Floor on alpha' so a layer whose warm-up update is identically zero (e.g. a
// frozen layer) still yields a usable step size.
inline constexpr double kAlphaPrimeFloor = 1e-8;

// alpha' = max(|m|_1 / d, floor), alpha_e = 0, rho from run config.
StepSizeParam init_step_size(const Vec& m, double rho);

enum class Region : std::uint8_t { kAbove, kInside, kBelow };

// Per-element outcome of one forward binarization. The backward pass reuses
// the realized floor bit c so that the alpha gradient sees the same rounding
// the forward pass emitted; a fresh draw would decouple the two.
struct BinarizeRecord {
  std::vector<Region> regions;
  std::vector<std::uint8_t> floor_bits;  // c in {0,1}; meaningful only inside
};

// Stochastic sign of one element with an explicit noise realization.
// For |x| <= alpha: emits alpha*(2c - 1) with c = floor((alpha+x)/(2*alpha) + zeta)
// clamped to {0,1}. Values outside the band are clamped to +-alpha.
struct ElementOutcome {
  double value;
  Region region;
  std::uint8_t floor_bit;
};
ElementOutcome binarize_element(double x, double alpha, double zeta);

// Clamped stochastic sign of a whole vector; every output element is exactly
// +-effective_alpha(step). Noise is drawn fresh per element per call.
std::pair<Vec, BinarizeRecord> binarize_forward(const Vec& m,
                                                const StepSizeParam& step,
                                                SeededRng& rng);

struct BinarizeGrad {
  Vec grad_m;           // upstream masked to the |x| <= alpha band
  double grad_alpha_e;  // chain rule through alpha = alpha' exp(rho alpha_e)
};

// Straight-through backward: d/dx is the indicator of the band, d/dalpha is
// +1 above, -1 below, and 2c - (x+alpha)/alpha inside using the recorded c.
// grad_alpha_e accumulates sum_i upstream_i * g_i * (rho * alpha).
BinarizeGrad binarize_backward(const Vec& upstream, const Vec& m,
                               const StepSizeParam& step,
                               const BinarizeRecord& record);

// Analysis-mode binarization with alpha = |m|_inf and no learning: an
// unbiased estimate of m (every element lands inside the band). The zero
// vector is returned unchanged.
Vec binarize_theory_variant(const Vec& m, SeededRng& rng);

// Monte Carlo estimate of sqrt(E|S(m) - m|^2 / |m|^2) under the theory
// variant; the measurable counterpart of the variance growth ratio q.
double variance_ratio_q(const Vec& m, int trials, SeededRng& rng);

}  // namespace fedbat

#endif  // FEDBAT_BINARIZER_HPP
