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

// Weak (measure-valued) derivatives of the Euler transition kernel.
//
// The theta-derivative of N(x + dt b_theta, dt sigma sigma^T) with diagonal
// sigma splits, per coordinate, into a Rayleigh-distributed positive part on
// one side of the mean and its mirror image on the other side, both carrying
// the same mass c_i = |d mu_i / d theta| / (s_i sqrt(2 pi)). Differentiating
// E[C(X)] then amounts to branching one Euler step into the two parts and
// propagating both branches with common increments.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

#include "malliwd/error.hpp"
#include "malliwd/functional.hpp"
#include "malliwd/numeric.hpp"
#include "malliwd/path.hpp"

namespace malliwd {

struct HjComponent {
  int index = 0;
  double weight = 0.0;          // c_i
  double sign = 1.0;            // sign of d mu_i / d theta
  double rayleigh_scale = 0.0;  // s_i = |sigma_ii| sqrt(dt)
  double mean = 0.0;            // mu_i
};

template <int N>
struct HjDecomposition {
  double scale = 0.0;
  std::vector<HjComponent> per_dimension;
  Vec<N> mean = Vec<N>::Zero();
  /// Kernel standard deviation of every coordinate.
  Vec<N> spread = Vec<N>::Zero();

  bool degenerate() const { return scale == 0.0; }

  /// Density of the normalized positive (sign = +1) or negative part.
  double part_density(const Vec<N>& y, double side) const {
    if (degenerate()) return 0.0;
    double total = 0.0;
    for (const auto& comp : per_dimension) {
      const double r = side * comp.sign * (y[comp.index] - comp.mean);
      if (r <= 0.0) continue;
      const double s2 = comp.rayleigh_scale * comp.rayleigh_scale;
      double term = (comp.weight / scale) * (r / s2) * std::exp(-0.5 * r * r / s2);
      for (int j = 0; j < N; ++j) {
        if (j != comp.index) term *= normal_pdf(y[j], mean[j], spread[j]);
      }
      total += term;
    }
    return total;
  }

  /// c (rho+ - rho-)(y).
  double signed_density(const Vec<N>& y) const {
    return scale * (part_density(y, 1.0) - part_density(y, -1.0));
  }

  static double normal_pdf(double y, double mu, double sd) {
    const double z = (y - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  }
};

template <int N, int D>
HjDecomposition<N> hj_decompose(const SdeModel<N, D>& model, const VecArg<N>& x, double t,
                                double theta, double dt) {
  static_assert(N == D, "Hahn-Jordan branching needs a square diagonal diffusion");
  if (!(dt > 0.0)) throw Error(ErrorKind::kInvalidArgument, "dt must be positive");
  const Mat<N, D> sigma = model.diffusion(x, t);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < D; ++j) {
      if (i != j && sigma(i, j) != 0.0) {
        throw Error(ErrorKind::kInvalidArgument, "diffusion matrix is not diagonal");
      }
    }
  }
  HjDecomposition<N> out;
  out.mean = x + dt * model.drift(x, t, theta);
  const Vec<N> dmu = dt * model.drift_dtheta(x, t, theta);
  const double root_dt = std::sqrt(dt);
  for (int i = 0; i < N; ++i) {
    const double s = std::abs(sigma(i, i)) * root_dt;
    out.spread[i] = s;
    if (dmu[i] == 0.0) continue;
    if (s == 0.0) {
      throw Error(ErrorKind::kSingularDiffusion, "zero diffusion in a sensitive coordinate");
    }
    HjComponent c;
    c.index = i;
    c.weight = std::abs(dmu[i]) / (s * std::sqrt(2.0 * std::numbers::pi));
    c.sign = dmu[i] > 0.0 ? 1.0 : -1.0;
    c.rayleigh_scale = s;
    c.mean = out.mean[i];
    out.scale += c.weight;
    out.per_dimension.push_back(c);
  }
  return out;
}

/// Replacement increments for the branched step. Both branches share one
/// Rayleigh radius; coordinates other than the selected one keep the
/// nominal increment.
template <int N, int D>
std::pair<Vec<D>, Vec<D>> branch_increments(const HjDecomposition<N>& hj,
                                            const Mat<N, D>& sigma, const VecArg<D>& nominal,
                                            UniformPair draw) {
  double pick = draw.second * hj.scale;
  const HjComponent* chosen = &hj.per_dimension.back();
  for (const auto& c : hj.per_dimension) {
    if (pick < c.weight) {
      chosen = &c;
      break;
    }
    pick -= c.weight;
  }
  const double radius = chosen->rayleigh_scale * std::sqrt(-2.0 * std::log(draw.first));
  const int i = chosen->index;
  Vec<D> plus = nominal, minus = nominal;
  plus[i] = chosen->sign * radius / sigma(i, i);
  minus[i] = -chosen->sign * radius / sigma(i, i);
  return {plus, minus};
}

enum class BranchMode { kSumOverK, kRandomK };

constexpr std::string_view mode_name(BranchMode m) {
  return m == BranchMode::kSumOverK ? "sum-over-k" : "random-k";
}

namespace detail {

template <std::size_t K>
struct BranchTerm {
  std::array<double, K> value{};
  double abs_difference = 0.0;  // |C+ - C-| of the first functional
  bool evaluated = false;
};

// c (C(X+) - C(X-)) for the branch at step k of `base`.
template <std::size_t K, int N, int D, class Eval>
BranchTerm<K> branch_at(const SdeModel<N, D>& model, const PathBundle<N, D>& base,
                        std::size_t k, Eval&& eval) {
  BranchTerm<K> out;
  const double t = base.grid.time(k);
  const auto hj = hj_decompose(model, base.states[k], t, base.theta, base.grid.dt());
  if (hj.degenerate()) return out;
  const auto draw = base.noise.stream.uniforms(StreamTag::kBranch, static_cast<std::uint32_t>(k));
  const auto [up, down] =
      branch_increments(hj, model.diffusion(base.states[k], t), base.noise.increments[k], draw);
  NoisePath<D> plus_noise = base.noise, minus_noise = base.noise;
  plus_noise.increments[k] = up;
  minus_noise.increments[k] = down;
  const auto plus = resume_path(model, base, k, base.states[k], std::move(plus_noise));
  const auto minus = resume_path(model, base, k, base.states[k], std::move(minus_noise));
  const std::array<double, K> cp = eval(plus), cm = eval(minus);
  for (std::size_t j = 0; j < K; ++j) out.value[j] = hj.scale * (cp[j] - cm[j]);
  out.abs_difference = std::abs(cp[0] - cm[0]);
  out.evaluated = true;
  return out;
}

// Per-path HJ gradient term; random-k includes the factor M.
template <std::size_t K, int N, int D, class Eval>
BranchTerm<K> path_term(const SdeModel<N, D>& model, const PathBundle<N, D>& base,
                        BranchMode mode, Eval&& eval, std::size_t& branches) {
  const std::size_t m = base.steps();
  if (mode == BranchMode::kRandomK) {
    const double u = base.noise.stream.uniforms(StreamTag::kBranchTime, 0).first;
    const auto k = std::min(m - 1, static_cast<std::size_t>(u * static_cast<double>(m)));
    auto term = branch_at<K>(model, base, k, eval);
    for (auto& v : term.value) v *= static_cast<double>(m);
    branches = 1;
    return term;
  }
  BranchTerm<K> total;
  for (std::size_t k = 0; k < m; ++k) {
    const auto term = branch_at<K>(model, base, k, eval);
    for (std::size_t j = 0; j < K; ++j) total.value[j] += term.value[j];
    total.abs_difference += term.abs_difference;
  }
  total.evaluated = true;
  branches = m;
  return total;
}

}  // namespace detail

/// One branch at step k: c(X_k) (C(X+) - C(X-)).
template <int N, int D>
double hj_single_branch(const SdeModel<N, D>& model, double theta, const VecArg<N>& x0,
                        const TimeGrid& grid, std::size_t branch_step,
                        const PathFunctional<N, D>& functional, std::uint64_t master_seed,
                        std::uint64_t path_index) {
  if (branch_step >= grid.steps()) {
    throw Error(ErrorKind::kInvalidArgument, "branch step must be below M");
  }
  const auto base = simulate_path(model, theta, x0, grid,
                                  generate_noise<D>(master_seed, path_index, grid), false);
  const auto term = detail::branch_at<1>(model, base, branch_step,
                                         [&](const PathBundle<N, D>& b) {
                                           return std::array<double, 1>{functional.value(b)};
                                         });
  return term.value[0];
}

struct GradientReport {
  double estimate = 0.0;
  double variance = 0.0;  // per-path sample variance
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  BranchMode mode = BranchMode::kRandomK;
  double branch_stats = 0.0;  // mean |C+ - C-| over evaluated branches
  std::vector<double> per_path;
};

namespace detail {

inline GradientReport summarize(std::vector<double> terms, std::uint64_t seed) {
  GradientReport r;
  r.n_paths = terms.size();
  r.seed = seed;
  r.estimate = sample_mean(terms);
  r.variance = sample_variance(terms);
  r.std_error = standard_error(terms);
  r.per_path = std::move(terms);
  return r;
}

}  // namespace detail

/// Weak-derivative estimate of d/dtheta E[C(X)] over `n_paths` base paths.
template <int N, int D>
GradientReport hj_gradient(const SdeModel<N, D>& model, double theta, const VecArg<N>& x0,
                           const TimeGrid& grid, const PathFunctional<N, D>& functional,
                           std::size_t n_paths, BranchMode mode, std::uint64_t master_seed) {
  if (n_paths < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two paths");
  std::vector<double> terms(n_paths), diffs(n_paths);
  std::vector<std::size_t> counts(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    const auto base =
        simulate_path(model, theta, x0, grid, generate_noise<D>(master_seed, i, grid), false);
    const auto term = detail::path_term<1>(
        model, base, mode,
        [&](const PathBundle<N, D>& b) { return std::array<double, 1>{functional.value(b)}; },
        counts[i]);
    terms[i] = term.value[0];
    diffs[i] = term.abs_difference;
  });
  auto r = detail::summarize(std::move(terms), master_seed);
  r.mode = mode;
  std::size_t total = 0;
  for (auto c : counts) total += c;
  r.branch_stats = compensated_sum(diffs) / static_cast<double>(std::max<std::size_t>(total, 1));
  return r;
}

/// Per-path d/dtheta log p_theta of the Euler path.
template <int N, int D>
double path_score(const SdeModel<N, D>& model, const PathBundle<N, D>& b) {
  const double dt = b.grid.dt();
  CompensatedSum score;
  for (std::size_t k = 0; k < b.steps(); ++k) {
    const double t = b.grid.time(k);
    const Vec<N>& x = b.states[k];
    const Vec<N> dmu = dt * model.drift_dtheta(x, t, b.theta);
    if (dmu.isZero(0.0)) continue;
    const Mat<N, D> sigma = model.diffusion(x, t);
    const Mat<N, N> cov = dt * sigma * sigma.transpose();
    const Vec<N> resid = b.states[k + 1] - x - dt * model.drift(x, t, b.theta);
    Eigen::LLT<Mat<N, N>> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::kSingularDiffusion, "Euler covariance is not positive definite", k);
    }
    score.add(dmu.dot(llt.solve(resid)));
  }
  return score.value();
}

/// Likelihood-ratio baseline: mean of C(X) * d/dtheta log p_theta(X).
template <int N, int D>
GradientReport score_function_gradient(const SdeModel<N, D>& model, double theta,
                                       const VecArg<N>& x0, const TimeGrid& grid,
                                       const PathFunctional<N, D>& functional,
                                       std::size_t n_paths, std::uint64_t master_seed) {
  if (n_paths < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two paths");
  std::vector<double> terms(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    const auto b =
        simulate_path(model, theta, x0, grid, generate_noise<D>(master_seed, i, grid), false);
    const double score = path_score(model, b);
    terms[i] = score == 0.0 ? 0.0 : functional.value(b) * score;
  });
  return detail::summarize(std::move(terms), master_seed);
}

}  // namespace malliwd
