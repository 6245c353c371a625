/*
 * Copyright 2026 The malliwd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "malliwd/error.hpp"
#include "malliwd/malliavin.hpp"
#include "malliwd/numeric.hpp"
#include "malliwd/weak_derivative.hpp"

namespace malliwd {

/// d/dtheta (e1 / e2) from the parts and their derivatives.
inline double quotient_gradient(double e1, double e2, double grad_e1, double grad_e2) {
  if (!(std::abs(e2) >= 1e-12)) {
    throw Error(ErrorKind::kDegenerateDenominator, "quotient denominator is (near) zero");
  }
  return (e2 * grad_e1 - e1 * grad_e2) / (e2 * e2);
}

struct CounterfactualGradient {
  double loss = 0.0;
  double gradient = 0.0;
  double se_loss = 0.0;
  double se_gradient = 0.0;
  double e1 = 0.0;
  double e2 = 0.0;
  double grad_e1 = 0.0;
  double grad_e2 = 0.0;
  double se_grad_e1 = 0.0;
  double se_grad_e2 = 0.0;
  /// Part of grad_e1 / grad_e2 coming from the explicit theta-dependence of
  /// the integrands (weights, D l and recovered increments).
  double explicit_e1 = 0.0;
  double explicit_e2 = 0.0;
  std::size_t n_paths = 0;
  BranchMode mode = BranchMode::kRandomK;
};

/// Gradient of E[l | g = 0] in theta.
///
/// E1 and E2 are expectations of integrands C_theta(X) that depend on theta
/// both through the law of X and explicitly (u, D l and the increments
/// recovered from the states all involve theta). The law part is the
/// weak-derivative branch estimator; the explicit part is a central
/// difference in theta with the sampled states held fixed. The two are
/// added per path, so per-path terms of E1, E2 and their gradients share
/// base paths and the standard errors follow from the delta method.
template <int N, int D>
CounterfactualGradient counterfactual_gradient(
    const SdeModel<N, D>& model, double theta, const PathFunctional<N, D>& ell,
    const PathFunctional<N, D>& g, const WeightRule<N, D>& rule, const TimeGrid& grid,
    const VecArg<N>& x0, std::size_t n_paths, BranchMode mode, std::uint64_t master_seed) {
  if (n_paths < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two paths");
  const double h = 1e-5 * std::max(1.0, std::abs(theta));
  std::vector<double> a(n_paths), b(n_paths), ga(n_paths), gb(n_paths), xa(n_paths),
      xb(n_paths);
  std::vector<std::size_t> counts(n_paths);

  const auto integrands = [&](const PathBundle<N, D>& p) {
    const auto v = evaluate_integrands(ell, g, rule, p);
    return std::array<double, 2>{v.numerator, v.denominator};
  };

  parallel_for(n_paths, [&](std::size_t i) {
    const auto base = simulate_path(model, theta, x0, grid,
                                    generate_noise<D>(master_seed, i, grid), true);
    const auto here = integrands(base);
    a[i] = here[0];
    b[i] = here[1];
    // Indicator 1{g > 0} does not move with theta at fixed states.
    if (here[0] != 0.0 || here[1] != 0.0) {
      const auto up = integrands(reinterpret_path(model, base, theta + h));
      const auto down = integrands(reinterpret_path(model, base, theta - h));
      xa[i] = (up[0] - down[0]) / (2.0 * h);
      xb[i] = (up[1] - down[1]) / (2.0 * h);
    }
    const auto term = detail::path_term<2>(model, base, mode, integrands, counts[i]);
    ga[i] = term.value[0] + xa[i];
    gb[i] = term.value[1] + xb[i];
  });

  CounterfactualGradient r;
  r.n_paths = n_paths;
  r.mode = mode;
  r.e1 = sample_mean(a);
  r.e2 = sample_mean(b);
  check_denominator(r.e2, standard_error(b));
  r.grad_e1 = sample_mean(ga);
  r.grad_e2 = sample_mean(gb);
  r.se_grad_e1 = standard_error(ga);
  r.se_grad_e2 = standard_error(gb);
  r.explicit_e1 = sample_mean(xa);
  r.explicit_e2 = sample_mean(xb);
  r.loss = r.e1 / r.e2;
  r.se_loss = ratio_standard_error(a, b);
  r.gradient = quotient_gradient(r.e1, r.e2, r.grad_e1, r.grad_e2);

  // Delta method on f(A, B, G1, G2) = (B G1 - A G2) / B^2.
  const double e2sq = r.e2 * r.e2;
  const double d_a = -r.grad_e2 / e2sq;
  const double d_b = r.grad_e1 / e2sq - 2.0 * (r.e2 * r.grad_e1 - r.e1 * r.grad_e2) / (e2sq * r.e2);
  const double d_g1 = 1.0 / r.e2;
  const double d_g2 = -r.e1 / e2sq;
  std::vector<double> influence(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    influence[i] = d_a * (a[i] - r.e1) + d_b * (b[i] - r.e2) + d_g1 * (ga[i] - r.grad_e1) +
                   d_g2 * (gb[i] - r.grad_e2);
  }
  r.se_gradient = standard_error(influence);
  return r;
}

struct OptimizerConfig {
  double theta0 = 1.0;
  double step_size = 0.05;
  std::size_t n_iterations = 100;
  std::size_t paths_per_iteration = 10000;
  double theta_min = 0.2;
  double theta_max = 3.0;
  BranchMode gradient_mode = BranchMode::kRandomK;
  std::uint64_t master_seed = 1;

  void validate() const {
    if (!(theta_min < theta_max)) {
      throw Error(ErrorKind::kInvalidArgument, "theta bounds must satisfy min < max");
    }
    if (!(step_size >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "negative step size");
    if (paths_per_iteration < 2) {
      throw Error(ErrorKind::kInvalidArgument, "need at least two paths per iteration");
    }
  }
};

struct IterationRecord {
  std::size_t iteration = 0;
  double theta = 0.0;
  double loss = 0.0;
  double gradient = 0.0;
  double e1 = 0.0;
  double e2 = 0.0;
  double se_loss = 0.0;
  double se_gradient = 0.0;
};

struct OptimizationTrace {
  std::vector<IterationRecord> records;
  double final_theta = 0.0;
  double wall_seconds = 0.0;
  /// Set when an estimator failure stopped the run early.
  std::optional<ErrorKind> failure;
  std::string failure_message;
};

/// Projected stochastic gradient descent on theta -> E[l | g = 0]:
/// theta <- clamp(theta - step * grad, theta_min, theta_max).
template <int N, int D>
OptimizationTrace run_sgd(const SdeModel<N, D>& model, const PathFunctional<N, D>& ell,
                          const PathFunctional<N, D>& g, const WeightRule<N, D>& rule,
                          const OptimizerConfig& config, const TimeGrid& grid,
                          const VecArg<N>& x0) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  OptimizationTrace trace;
  double theta = std::clamp(config.theta0, config.theta_min, config.theta_max);
  for (std::size_t n = 0; n < config.n_iterations; ++n) {
    IterationRecord rec;
    rec.iteration = n;
    rec.theta = theta;
    try {
      const auto cg = counterfactual_gradient(model, theta, ell, g, rule, grid, x0,
                                              config.paths_per_iteration, config.gradient_mode,
                                              derive_seed(config.master_seed, n));
      rec.loss = cg.loss;
      rec.gradient = cg.gradient;
      rec.e1 = cg.e1;
      rec.e2 = cg.e2;
      rec.se_loss = cg.se_loss;
      rec.se_gradient = cg.se_gradient;
    } catch (const Error& e) {
      trace.failure = e.kind();
      trace.failure_message = e.what();
      break;
    }
    trace.records.push_back(rec);
    theta = std::clamp(theta - config.step_size * rec.gradient, config.theta_min,
                       config.theta_max);
  }
  trace.final_theta = theta;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace malliwd
