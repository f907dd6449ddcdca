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

#include "fedbat/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedbat/binarizer.hpp"
#include "fedbat/engine.hpp"

namespace fedbat {

namespace {

Mat random_orthogonal(int dim, SeededRng& rng) {
  Mat g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = rng.gaussian(1.0);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(dim, dim);
  return q;
}

Vec random_gaussian_vec(int dim, SeededRng& rng) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.gaussian(1.0);
  return v;
}

}  // namespace

double QuadraticProblem::global_loss(const Vec& w) const {
  double loss = 0.0;
  for (int k = 0; k < n_clients(); ++k)
    loss += weights[static_cast<std::size_t>(k)] * client_loss(k, w);
  return loss;
}

double QuadraticProblem::client_loss(int k, const Vec& w) const {
  const Vec r = a[static_cast<std::size_t>(k)] * w - b[static_cast<std::size_t>(k)];
  return 0.5 * r.squaredNorm();
}

Vec QuadraticProblem::client_grad(int k, const Vec& w) const {
  const auto& ak = a[static_cast<std::size_t>(k)];
  return ak.transpose() * (ak * w - b[static_cast<std::size_t>(k)]);
}

QuadraticProblem QuadraticProblem::from_data(std::vector<Mat> a,
                                             std::vector<Vec> b,
                                             std::vector<double> weights) {
  if (a.empty() || a.size() != b.size() || a.size() != weights.size())
    throw DimensionError("quadratic problem: client data shape mismatch");
  const int dim = static_cast<int>(a[0].cols());
  QuadraticProblem prob;
  prob.a = std::move(a);
  prob.b = std::move(b);
  prob.weights = std::move(weights);

  Mat h = Mat::Zero(dim, dim);
  Vec rhs = Vec::Zero(dim);
  for (int k = 0; k < prob.n_clients(); ++k) {
    const auto& ak = prob.a[static_cast<std::size_t>(k)];
    h += prob.weights[static_cast<std::size_t>(k)] * (ak.transpose() * ak);
    rhs += prob.weights[static_cast<std::size_t>(k)] *
           (ak.transpose() * prob.b[static_cast<std::size_t>(k)]);
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(h);
  prob.mu = eig.eigenvalues().minCoeff();
  prob.smoothness = eig.eigenvalues().maxCoeff();
  if (prob.mu < 1e-6)
    throw ArgumentError("quadratic problem: below the conditioning floor");
  prob.w_star = h.ldlt().solve(rhs);
  prob.f_star = prob.global_loss(prob.w_star);

  double fk_star_sum = 0.0;
  for (int k = 0; k < prob.n_clients(); ++k) {
    const auto& ak = prob.a[static_cast<std::size_t>(k)];
    const Vec wk = (ak.transpose() * ak)
                       .ldlt()
                       .solve(ak.transpose() * prob.b[static_cast<std::size_t>(k)]);
    fk_star_sum +=
        prob.weights[static_cast<std::size_t>(k)] * prob.client_loss(k, wk);
  }
  prob.gamma_het = prob.f_star - fk_star_sum;
  return prob;
}

QuadraticProblem make_problem(int n_clients, int dim, double heterogeneity,
                              std::uint64_t seed) {
  if (dim < 1) throw ArgumentError("make_problem: dim must be >= 1");
  if (n_clients < 1) throw ArgumentError("make_problem: need >= 1 client");
  if (heterogeneity < 0.0)
    throw ArgumentError("make_problem: heterogeneity must be >= 0");
  SeededRng root(seed);

  std::vector<Mat> a;
  std::vector<Vec> b;
  SeededRng shared_rng = root.split("w-shared");
  const Vec w_shared = random_gaussian_vec(dim, shared_rng);

  for (int k = 0; k < n_clients; ++k) {
    SeededRng crng = root.split("client").split(static_cast<std::uint64_t>(k));
    // A_k = Q1 diag(s) Q2^T with singular values in [0.8, 1.2]: every
    // client curvature sits in [0.64, 1.44], so the average does too.
    SeededRng q1_rng = crng.split("q1");
    SeededRng q2_rng = crng.split("q2");
    SeededRng s_rng = crng.split("singulars");
    Mat q1 = random_orthogonal(dim, q1_rng);
    Mat q2 = random_orthogonal(dim, q2_rng);
    Vec s(dim);
    for (int i = 0; i < dim; ++i) s(i) = s_rng.uniform_range(0.8, 1.2);
    Mat ak = q1 * s.asDiagonal() * q2.transpose();

    SeededRng d_rng = crng.split("offset");
    const Vec delta = random_gaussian_vec(dim, d_rng);
    b.push_back(ak * w_shared + heterogeneity * delta);
    a.push_back(std::move(ak));
  }
  return QuadraticProblem::from_data(
      std::move(a), std::move(b),
      std::vector<double>(static_cast<std::size_t>(n_clients),
                          1.0 / static_cast<double>(n_clients)));
}

double lr_gamma(double mu, double smoothness, int tau) {
  return std::max(8.0 * smoothness / mu, static_cast<double>(tau)) - 1.0;
}

double lr_schedule_theorem(double mu, double smoothness, int tau, int t) {
  if (!(mu > 0.0)) throw ArgumentError("lr_schedule: mu must be > 0");
  return 2.0 / (mu * (lr_gamma(mu, smoothness, tau) + t));
}

RateFit fit_rate_range(const std::vector<double>& gaps, int first_round,
                       int last_round) {
  const int n = static_cast<int>(gaps.size());
  if (first_round < 1 || last_round > n || last_round - first_round < 1)
    throw ArgumentError("fit_rate: bad round range");
  std::vector<double> xs, ys;
  for (int r = first_round; r <= last_round; ++r) {
    const double g = gaps[static_cast<std::size_t>(r - 1)];
    if (!(g > 0.0)) throw ArgumentError("fit_rate: nonpositive gap in window");
    xs.push_back(std::log(static_cast<double>(r)));
    ys.push_back(std::log(g));
  }
  const std::size_t m = xs.size();
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.first_round = first_round;
  fit.last_round = last_round;
  double sse = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = ys[i] - (my + fit.slope * (xs[i] - mx));
    sse += e * e;
  }
  if (m > 2) fit.half_width = 1.96 * std::sqrt(sse / (m - 2) / sxx);
  return fit;
}

RateFit fit_rate(const std::vector<double>& gaps, double tail_window) {
  if (!(tail_window > 0.0) || tail_window > 1.0)
    throw ArgumentError("fit_rate: window must be in (0, 1]");
  const int n = static_cast<int>(gaps.size());
  const int count = std::max(2, static_cast<int>(std::floor(tail_window * n)));
  return fit_rate_range(gaps, n - count + 1, n);
}

TheoremRunResult run_theorem_mode(const QuadraticProblem& problem,
                                  const TheoremRunSpec& spec) {
  if (spec.rounds < 1) throw ArgumentError("theorem mode: rounds must be >= 1");
  if (spec.tau < 1) throw ArgumentError("theorem mode: tau must be >= 1");
  if (spec.n_seeds < 1) throw ArgumentError("theorem mode: need >= 1 seed");
  const int n = problem.n_clients();
  const int dim = problem.dim();
  const bool partial = spec.k_clients >= 1 && spec.k_clients <= n;
  if (spec.k_clients != 0 && !partial)
    throw ArgumentError("theorem mode: k_clients out of range");

  TheoremRunResult result;
  result.mean_gaps.assign(static_cast<std::size_t>(spec.rounds), 0.0);

  for (int rep = 0; rep < spec.n_seeds; ++rep) {
    SeededRng root = SeededRng(spec.seed).split("replicate").split(static_cast<std::uint64_t>(rep));
    std::vector<double> gaps;
    Vec w_round = Vec::Zero(dim);            // synced parameters
    std::vector<Vec> w(static_cast<std::size_t>(n), w_round);  // per client
    int t = 0;  // cumulative local step count

    for (int round = 0; round < spec.rounds; ++round) {
      SeededRng round_stream = root.split("round").split(static_cast<std::uint64_t>(round));
      std::vector<SeededRng> client_rng;
      for (int k = 0; k < n; ++k)
        client_rng.push_back(round_stream.split("client").split(static_cast<std::uint64_t>(k)));

      // All clients run locally; only the selected set is aggregated.
      for (int s = 0; s < spec.tau; ++s) {
        t += 1;
        const double eta =
            spec.lr_scale *
            lr_schedule_theorem(problem.mu, problem.smoothness, spec.tau, t);
        for (int k = 0; k < n; ++k) {
          const auto idx = static_cast<std::size_t>(k);
          Vec x;
          if (spec.identity_binarizer) {
            x = w[idx];
          } else {
            const Vec m = w[idx] - w_round;
            x = w_round + binarize_theory_variant(m, client_rng[idx]);
          }
          Vec grad;
          if (spec.minibatch_rows > 0) {
            // Uniform subset of the client's residual rows, scaled back up.
            const auto& ak = problem.a[idx];
            const int rows = static_cast<int>(ak.rows());
            const int take = std::min(spec.minibatch_rows, rows);
            std::vector<int> row_ids(static_cast<std::size_t>(rows));
            std::iota(row_ids.begin(), row_ids.end(), 0);
            SeededRng& rng = client_rng[idx];
            for (int i = 0; i < take; ++i) {
              const std::size_t j = static_cast<std::size_t>(i) +
                  static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(rows - i)));
              std::swap(row_ids[static_cast<std::size_t>(i)], row_ids[j]);
            }
            grad = Vec::Zero(dim);
            const double scale = static_cast<double>(rows) / take;
            for (int i = 0; i < take; ++i) {
              const int r = row_ids[static_cast<std::size_t>(i)];
              const double resid = ak.row(r).dot(x) - problem.b[idx](r);
              grad += scale * resid * ak.row(r).transpose();
            }
          } else {
            grad = problem.client_grad(k, x);
          }
          w[idx] -= eta * grad;
        }
      }

      // Aggregation of binarized end-of-round updates.
      std::vector<int> selected;
      if (partial) {
        SeededRng sampling = round_stream.split("sampling");
        selected = sample_clients(n, spec.k_clients, sampling).selected;
      } else {
        selected.resize(static_cast<std::size_t>(n));
        std::iota(selected.begin(), selected.end(), 0);
      }
      double wsum = 0.0;
      for (int k : selected) wsum += problem.weights[static_cast<std::size_t>(k)];
      Vec next = w_round;
      for (int k : selected) {
        const auto idx = static_cast<std::size_t>(k);
        const double p = problem.weights[idx] / wsum;
        const Vec m = w[idx] - w_round;
        const Vec update = spec.identity_binarizer
                               ? m
                               : binarize_theory_variant(m, client_rng[idx]);
        next += p * update;
      }
      w_round = next;
      for (int k = 0; k < n; ++k) w[static_cast<std::size_t>(k)] = w_round;

      const double gap = problem.global_loss(w_round) - problem.f_star;
      if (!(gap < kDivergenceGap) || !std::isfinite(gap))
        throw DivergenceError("theorem mode: optimality gap exceeded " +
                              std::to_string(kDivergenceGap));
      gaps.push_back(gap);
    }
    for (std::size_t r = 0; r < gaps.size(); ++r)
      result.mean_gaps[r] += gaps[r] / static_cast<double>(spec.n_seeds);
    result.seed_gaps.push_back(std::move(gaps));
  }
  return result;
}

}  // namespace fedbat
