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

#include "fedbat/binarizer.hpp"

#include <algorithm>
#include <cmath>

namespace fedbat {

double effective_alpha(const StepSizeParam& step) {
  return step.alpha_prime * std::exp(step.rho * step.alpha_e);
}

StepSizeParam init_step_size(const Vec& m, double rho) {
  StepSizeParam step;
  step.alpha_prime =
      std::max(norms(m).l1 / static_cast<double>(m.size()), kAlphaPrimeFloor);
  step.alpha_e = 0.0;
  step.rho = rho;
  return step;
}

ElementOutcome binarize_element(double x, double alpha, double zeta) {
  if (x > alpha) return {alpha, Region::kAbove, 1};
  if (x < -alpha) return {-alpha, Region::kBelow, 0};
  // Stochastic branch: (alpha+x)/(2 alpha) is in [0,1], so the floored sum
  // with zeta in [0,1) lands in {0,1}; the clamp guards rounding at the rim.
  const double q = (alpha + x) / (2.0 * alpha);
  double c = std::floor(q + zeta);
  c = std::clamp(c, 0.0, 1.0);
  return {alpha * (2.0 * c - 1.0), Region::kInside,
          static_cast<std::uint8_t>(c)};
}

std::pair<Vec, BinarizeRecord> binarize_forward(const Vec& m,
                                                const StepSizeParam& step,
                                                SeededRng& rng) {
  require_finite(m, "binarize_forward");
  const double alpha = effective_alpha(step);
  Vec out(m.size());
  BinarizeRecord rec;
  rec.regions.resize(static_cast<std::size_t>(m.size()));
  rec.floor_bits.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double zeta =
        (m(i) > alpha || m(i) < -alpha) ? 0.0 : rng.uniform();
    const ElementOutcome o = binarize_element(m(i), alpha, zeta);
    out(i) = o.value;
    rec.regions[static_cast<std::size_t>(i)] = o.region;
    rec.floor_bits[static_cast<std::size_t>(i)] = o.floor_bit;
  }
  return {std::move(out), std::move(rec)};
}

BinarizeGrad binarize_backward(const Vec& upstream, const Vec& m,
                               const StepSizeParam& step,
                               const BinarizeRecord& record) {
  if (upstream.size() != m.size() ||
      record.regions.size() != static_cast<std::size_t>(m.size()) ||
      record.floor_bits.size() != static_cast<std::size_t>(m.size())) {
    throw ContractError("binarize_backward: record does not match forward shape");
  }
  const double alpha = effective_alpha(step);
  BinarizeGrad g;
  g.grad_m = Vec::Zero(m.size());
  double alpha_sum = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    double galpha;
    switch (record.regions[idx]) {
      case Region::kAbove:
        galpha = 1.0;
        break;
      case Region::kBelow:
        galpha = -1.0;
        break;
      case Region::kInside:
      default:
        g.grad_m(i) = upstream(i);
        galpha = 2.0 * static_cast<double>(record.floor_bits[idx]) -
                 (m(i) + alpha) / alpha;
        break;
    }
    alpha_sum += upstream(i) * galpha;
  }
  // alpha_e is the learnable parameter: d alpha / d alpha_e = rho * alpha.
  g.grad_alpha_e = alpha_sum * step.rho * alpha;
  return g;
}

Vec binarize_theory_variant(const Vec& m, SeededRng& rng) {
  const double alpha = norms(m).linf;
  if (alpha == 0.0) return m;
  Vec out(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out(i) = binarize_element(m(i), alpha, rng.uniform()).value;
  }
  return out;
}

double variance_ratio_q(const Vec& m, int trials, SeededRng& rng) {
  if (norms(m).linf == 0.0)
    throw ArgumentError("variance_ratio_q: zero vector");
  if (trials < 1000) throw ArgumentError("variance_ratio_q: trials < 1000");
  const double denom = m.squaredNorm();
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Vec s = binarize_theory_variant(m, rng);
    acc += (s - m).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(trials) / denom);
}

}  // namespace fedbat
