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

// Conditional expectations given a zero-probability constraint g(X) = 0,
// written as a ratio of two unconditional expectations of Skorohod-weighted
// path functionals:
//
//   E[l | g = 0] = E[1{g>0} (l S(u) - sum_k <D_k l, u_k> dt)] / E[1{g>0} S(u)]
//
// for any weight u with sum_k <D_k g, u_k> dt = 1 pathwise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "malliwd/error.hpp"
#include "malliwd/functional.hpp"
#include "malliwd/numeric.hpp"
#include "malliwd/path.hpp"

namespace malliwd {

/// D_{t_s} X_{t_t}: Y_t Z_{s+1} sigma(X_s) for s < t, zero otherwise.
template <int N, int D>
Mat<N, D> malliavin_derivative_state(const PathBundle<N, D>& b, std::size_t s,
                                     std::size_t t) {
  const auto& jt = detail::require_jacobian(b);
  if (s >= t) return Mat<N, D>::Zero();
  return jt.forward.at(t) * jt.loading.at(s);
}

enum class WeightKind { kCanonical, kReciprocal, kCustom };

/// Non-adapted weight u = F * u_hat with u_hat adapted. `derivative[k]` is
/// D_{t_k} F.
template <int D>
struct AnticipativeFactor {
  double value = 1.0;
  std::vector<Vec<D>> derivative;
};

template <int D>
struct WeightProcess {
  /// u at t_0..t_M, or the adapted part u_hat when `factor` is set.
  std::vector<Vec<D>> values;
  WeightKind rule = WeightKind::kCustom;
  double support_measure = 0.0;
  bool adapted = true;
  /// Reciprocal rule only: D_t g gets close to zero on its support, so
  /// S(u) may have very large variance.
  bool near_zero_derivative = false;
  /// |u|_H^2 relative to the minimum-norm (canonical) weight.
  double norm_inflation = 1.0;
  std::optional<AnticipativeFactor<D>> factor;

  Vec<D> at(std::size_t k) const { return factor ? (factor->value * values[k]).eval() : values[k]; }

  WeightProcess scaled(double lambda) const {
    WeightProcess out = *this;
    for (auto& v : out.values) v *= lambda;
    return out;
  }
};

/// Reciprocal weights whose H-norm exceeds this multiple of the canonical
/// one are flagged as near-zero-derivative.
inline constexpr double kNormInflationLimit = 10.0;

namespace detail {

template <int D>
double derivative_norm2(const std::vector<Vec<D>>& dg, std::size_t m, double dt) {
  CompensatedSum acc;
  for (std::size_t k = 0; k < m; ++k) acc.add(dg[k].squaredNorm() * dt);
  return acc.value();
}

}  // namespace detail

/// u_k = D_k g / (sum_j |D_j g|^2 dt).
template <int N, int D>
WeightProcess<D> make_weight_canonical(const PathFunctional<N, D>& g,
                                       const PathBundle<N, D>& b) {
  const std::size_t m = b.steps();
  const double dt = b.grid.dt();
  const auto dg = g.derivative(b);
  const double norm2 = detail::derivative_norm2(dg, m, dt);
  if (!(norm2 >= 1e-14)) {
    throw Error(ErrorKind::kDegenerateConstraint,
                "constraint has (near) zero Malliavin derivative on this path");
  }
  WeightProcess<D> u;
  u.rule = WeightKind::kCanonical;
  u.adapted = b.deterministic_jacobian && g.linear;
  u.values.assign(m + 1, Vec<D>::Zero());
  std::size_t support = 0;
  for (std::size_t k = 0; k < m; ++k) {
    u.values[k] = dg[k] / norm2;
    if (!dg[k].isZero(0.0)) ++support;
  }
  u.support_measure = static_cast<double>(support) * dt;
  return u;
}

/// u_k = 1 / (S D_k g) where D_k g != 0 and 1 elsewhere, with S the measure
/// of the support of D g. Scalar noise only.
template <int N, int D>
WeightProcess<D> make_weight_reciprocal(const PathFunctional<N, D>& g,
                                        const PathBundle<N, D>& b) {
  if constexpr (D != 1) {
    throw Error(ErrorKind::kInvalidArgument, "reciprocal weights need scalar noise");
  } else {
    const std::size_t m = b.steps();
    const double dt = b.grid.dt();
    const auto dg = g.derivative(b);
    const double norm2 = detail::derivative_norm2(dg, m, dt);
    if (!(norm2 >= 1e-14)) {
      throw Error(ErrorKind::kDegenerateConstraint,
                  "constraint has (near) zero Malliavin derivative on this path");
    }
    std::size_t support = 0;
    double lo = INFINITY, hi = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double a = std::abs(dg[k][0]);
      if (a != 0.0) {
        ++support;
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
    }
    const double s = static_cast<double>(support) * dt;
    WeightProcess<D> u;
    u.rule = WeightKind::kReciprocal;
    u.adapted = b.deterministic_jacobian && g.linear;
    u.support_measure = s;
    u.values.assign(m + 1, Vec<D>::Ones());
    CompensatedSum u_norm2;
    for (std::size_t k = 0; k < m; ++k) {
      if (dg[k][0] != 0.0) {
        u.values[k][0] = 1.0 / (s * dg[k][0]);
        u_norm2.add(u.values[k][0] * u.values[k][0] * dt);
      }
    }
    // On the support the canonical weight has the smallest H-norm, 1 / norm2.
    u.norm_inflation = u_norm2.value() * norm2;
    u.near_zero_derivative = lo < 1e-8 * hi || u.norm_inflation > kNormInflationLimit;
    return u;
  }
}

/// Discrete Skorohod integral. Adapted u: sum_k <u_k, dW_k>. Factored
/// u = F u_hat: F S(u_hat) - sum_k <D_k F, u_hat_k> dt.
template <int N, int D>
double skorohod_integral(const WeightProcess<D>& u, const PathBundle<N, D>& b,
                         const std::type_identity_t<std::optional<AnticipativeFactor<D>>>& factor = std::nullopt) {
  const std::size_t m = b.steps();
  const auto& fac = factor ? factor : u.factor;
  CompensatedSum ito;
  for (std::size_t k = 0; k < m; ++k) ito.add(u.values[k].dot(b.noise.increments[k]));
  if (fac) {
    const double dt = b.grid.dt();
    CompensatedSum corr;
    for (std::size_t k = 0; k < m; ++k) corr.add(fac->derivative[k].dot(u.values[k]) * dt);
    return fac->value * ito.value() - corr.value();
  }
  if (!u.adapted) {
    throw Error(ErrorKind::kNonAdaptedWithoutFactorization,
                "weight anticipates the path and no factorization was supplied");
  }
  return ito.value();
}

/// How the conditional estimator builds u on each path.
template <int N, int D>
struct WeightRule {
  WeightKind kind = WeightKind::kCanonical;
  /// Deterministic rescaling of u; the quotient does not depend on it.
  double scale = 1.0;
  std::function<WeightProcess<D>(const PathFunctional<N, D>&, const PathBundle<N, D>&)> custom;

  WeightProcess<D> build(const PathFunctional<N, D>& g, const PathBundle<N, D>& b) const {
    WeightProcess<D> u;
    switch (kind) {
      case WeightKind::kCanonical: u = make_weight_canonical(g, b); break;
      case WeightKind::kReciprocal: u = make_weight_reciprocal(g, b); break;
      case WeightKind::kCustom:
        if (!custom) throw Error(ErrorKind::kInvalidArgument, "custom weight rule without builder");
        u = custom(g, b);
        break;
    }
    return scale == 1.0 ? u : u.scaled(scale);
  }
};

/// Per-path numerator and denominator integrands.
struct IntegrandValues {
  double numerator = 0.0;
  double denominator = 0.0;
  bool exceeded = false;
};

/// 1{g>0} (l S(u) - sum <D l, u> dt) and 1{g>0} S(u) on one path. Ties
/// g == 0 count as not exceeded.
template <int N, int D>
IntegrandValues evaluate_integrands(const PathFunctional<N, D>& ell,
                                    const PathFunctional<N, D>& g,
                                    const WeightRule<N, D>& rule, const PathBundle<N, D>& b) {
  IntegrandValues out;
  out.exceeded = g.value(b) > 0.0;
  if (!out.exceeded) return out;
  const auto u = rule.build(g, b);
  const double s = skorohod_integral(u, b);
  const auto dl = ell.derivative(b);
  const double dt = b.grid.dt();
  CompensatedSum corr;
  for (std::size_t k = 0; k < b.steps(); ++k) corr.add(dl[k].dot(u.at(k)) * dt);
  out.numerator = ell.value(b) * s - corr.value();
  out.denominator = s;
  return out;
}

struct EstimatorReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_path;
};

struct ConditionalLossReport {
  double e1_hat = 0.0;
  double e2_hat = 0.0;
  double quotient = 0.0;
  double std_error = 0.0;
  double e1_std_error = 0.0;
  double e2_std_error = 0.0;
  double acceptance_fraction = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  /// False when the denominator failed the 5-standard-error test (only
  /// reported under DenominatorPolicy::kReport).
  bool denominator_reliable = true;
  std::vector<double> numerator_terms;
  std::vector<double> denominator_terms;
};

enum class DenominatorPolicy { kThrow, kReport };

inline bool denominator_distinguishable(double mean, double se) {
  return std::abs(mean) >= 5.0 * se && mean != 0.0;
}

/// Rejects quotients whose denominator mean is within 5 standard errors of 0.
inline void check_denominator(double mean, double se) {
  if (!denominator_distinguishable(mean, se)) {
    throw Error(ErrorKind::kDegenerateDenominator,
                "denominator estimate is not distinguishable from zero");
  }
}

template <int N, int D>
ConditionalLossReport conditional_loss_estimate(
    const SdeModel<N, D>& model, double theta, const PathFunctional<N, D>& ell,
    const PathFunctional<N, D>& g, const WeightRule<N, D>& rule, std::size_t n_paths,
    std::uint64_t master_seed, const TimeGrid& grid, const VecArg<N>& x0,
    DenominatorPolicy policy = DenominatorPolicy::kThrow) {
  if (n_paths < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two paths");
  ConditionalLossReport r;
  r.n_paths = n_paths;
  r.seed = master_seed;
  r.numerator_terms.assign(n_paths, 0.0);
  r.denominator_terms.assign(n_paths, 0.0);
  std::vector<char> hit(n_paths, 0);
  parallel_for(n_paths, [&](std::size_t i) {
    const auto b = simulate_path(model, theta, x0, grid, generate_noise<D>(master_seed, i, grid),
                                 /*with_jacobian=*/true);
    const auto v = evaluate_integrands(ell, g, rule, b);
    r.numerator_terms[i] = v.numerator;
    r.denominator_terms[i] = v.denominator;
    hit[i] = v.exceeded;
  });
  r.e1_hat = sample_mean(r.numerator_terms);
  r.e2_hat = sample_mean(r.denominator_terms);
  r.e1_std_error = standard_error(r.numerator_terms);
  r.e2_std_error = standard_error(r.denominator_terms);
  r.denominator_reliable = denominator_distinguishable(r.e2_hat, r.e2_std_error);
  if (policy == DenominatorPolicy::kThrow) check_denominator(r.e2_hat, r.e2_std_error);
  r.quotient = r.e1_hat / r.e2_hat;
  r.std_error = ratio_standard_error(r.numerator_terms, r.denominator_terms);
  r.acceptance_fraction =
      static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(n_paths);
  return r;
}

/// Gaussian kernel K_h(y) = exp(-y^2 / (2 h^2)) / (h sqrt(2 pi)).
inline double gaussian_kernel(double y, double bandwidth) {
  return std::exp(-0.5 * (y / bandwidth) * (y / bandwidth)) /
         (bandwidth * std::sqrt(2.0 * std::numbers::pi));
}

namespace detail {

inline EstimatorReport kernel_ratio(std::vector<double> weighted_loss,
                                    std::vector<double> weights) {
  const double mass = compensated_sum(weights);
  if (!(mass >= 1e-300)) {
    throw Error(ErrorKind::kEmptyKernelMass, "no path has g(X) within reach of the kernel");
  }
  EstimatorReport r;
  r.n_paths = weights.size();
  r.estimate = compensated_sum(weighted_loss) / mass;
  r.std_error = ratio_standard_error(weighted_loss, weights);
  r.per_path = std::move(weights);
  return r;
}

}  // namespace detail

/// Kernel-smoothing baseline sum l K(g) / sum K(g). `per_path` holds the
/// kernel weights.
template <int N, int D>
EstimatorReport kernel_loss_estimate(std::span<const PathBundle<N, D>> paths,
                                     const PathFunctional<N, D>& ell,
                                     const PathFunctional<N, D>& g, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorKind::kInvalidArgument, "bandwidth must be positive");
  std::vector<double> lk(paths.size()), k(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    k[i] = gaussian_kernel(g.value(paths[i]), bandwidth);
    lk[i] = ell.value(paths[i]) * k[i];
  }
  return detail::kernel_ratio(std::move(lk), std::move(k));
}

/// Same estimator on freshly simulated paths (same streams as
/// conditional_loss_estimate for equal seeds).
template <int N, int D>
EstimatorReport kernel_loss_estimate(const SdeModel<N, D>& model, double theta,
                                     const PathFunctional<N, D>& ell,
                                     const PathFunctional<N, D>& g, double bandwidth,
                                     std::size_t n_paths, std::uint64_t master_seed,
                                     const TimeGrid& grid, const VecArg<N>& x0) {
  if (!(bandwidth > 0.0)) throw Error(ErrorKind::kInvalidArgument, "bandwidth must be positive");
  std::vector<double> lk(n_paths), k(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    const auto b = simulate_path(model, theta, x0, grid, generate_noise<D>(master_seed, i, grid),
                                 /*with_jacobian=*/false);
    k[i] = gaussian_kernel(g.value(b), bandwidth);
    lk[i] = ell.value(b) * k[i];
  });
  auto r = detail::kernel_ratio(std::move(lk), std::move(k));
  r.seed = master_seed;
  return r;
}

}  // namespace malliwd
