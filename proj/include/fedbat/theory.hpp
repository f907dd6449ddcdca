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

#ifndef FEDBAT_THEORY_HPP
#define FEDBAT_THEORY_HPP

#include <cstdint>
#include <vector>

#include "fedbat/rng.hpp"
#include "fedbat/tensor.hpp"

namespace fedbat {

// Raised when the optimality gap blows past the divergence ceiling.
struct DivergenceError : Error {
  using Error::Error;
};

inline constexpr double kDivergenceGap = 1e10;

// Per-client least squares F_k(w) = 0.5 |A_k w - b_k|^2 with equal client
// weights. Strongly convex; mu and L are the eigenvalue extent of the
// averaged curvature sum_k p_k A_k^T A_k.
struct QuadraticProblem {
  std::vector<Mat> a;
  std::vector<Vec> b;
  std::vector<double> weights;  // p_k, balanced
  Vec w_star;
  double f_star = 0.0;
  double mu = 0.0;
  double smoothness = 0.0;  // L
  double gamma_het = 0.0;   // heterogeneity measure: F* - sum p_k F_k*

  int dim() const { return static_cast<int>(w_star.size()); }
  int n_clients() const { return static_cast<int>(a.size()); }
  double global_loss(const Vec& w) const;
  double client_loss(int k, const Vec& w) const;
  Vec client_grad(int k, const Vec& w) const;

  // Solves for w*, F*, mu, L and the heterogeneity measure from raw client
  // data. Rejects systems whose curvature falls below the conditioning floor.
  static QuadraticProblem from_data(std::vector<Mat> a, std::vector<Vec> b,
                                    std::vector<double> weights);
};

// Seeded well-conditioned instance; b_k = A_k w_shared + heterogeneity * d_k,
// so heterogeneity = 0 collapses every client onto one minimizer.
QuadraticProblem make_problem(int n_clients, int dim, double heterogeneity,
                              std::uint64_t seed);

// eta_t = 2 / (mu (gamma + t)) with gamma = max{8 L / mu, tau} - 1.
double lr_gamma(double mu, double smoothness, int tau);
double lr_schedule_theorem(double mu, double smoothness, int tau, int t);

struct RateFit {
  double slope = 0.0;
  double half_width = 0.0;  // 95% confidence half-width of the slope
  int first_round = 0;
  int last_round = 0;
};

// Least-squares slope of log(gap) against log(round) over rounds
// [first_round, last_round], 1-based.
RateFit fit_rate_range(const std::vector<double>& gaps, int first_round,
                       int last_round);
// Same, over the trailing `tail_window` fraction of the sequence.
RateFit fit_rate(const std::vector<double>& gaps, double tail_window);

struct TheoremRunSpec {
  int tau = 5;
  int rounds = 1000;
  int n_seeds = 10;
  // Full participation unless k_clients is in [1, N); sampling follows the
  // activate-all-aggregate-some scheme, so k_clients = N reproduces full
  // participation bit-exactly.
  int k_clients = 0;
  bool identity_binarizer = false;  // q = 0 control (plain FedAvg recursion)
  int minibatch_rows = 0;           // 0 = exact gradients
  double lr_scale = 1.0;
  std::uint64_t seed = 1;
};

struct TheoremRunResult {
  std::vector<double> mean_gaps;               // per round, averaged over seeds
  std::vector<std::vector<double>> seed_gaps;  // per seed, per round
};

// Analysis-mode loop: per-step binarization of the update against the last
// sync point with alpha = |m|_inf, decaying theorem schedule, aggregation of
// binarized updates every tau steps. Throws DivergenceError past the ceiling.
TheoremRunResult run_theorem_mode(const QuadraticProblem& problem,
                                  const TheoremRunSpec& spec);

}  // namespace fedbat

#endif  // FEDBAT_THEORY_HPP
