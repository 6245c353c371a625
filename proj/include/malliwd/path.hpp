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

// Noise generation and Euler-Maruyama simulation with the first-variation
// (Jacobian) recursion.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "malliwd/error.hpp"
#include "malliwd/model.hpp"
#include "malliwd/rng.hpp"

namespace malliwd {

template <int D>
struct NoisePath {
  StreamKey stream{0, 0};
  /// increments[k] is the Brownian increment over [t_k, t_{k+1}).
  std::vector<Vec<D>> increments;
};

/// Y_k = dX_k / dX_0, Z_k = Y_k^{-1}, and the per-step noise loading
/// L_k = Z_{k+1} sigma(X_k, t_k) so that dX_t / dW_s = Y_t L_s for s < t.
template <int N, int D>
struct JacobianTrack {
  std::vector<Mat<N, N>> forward;
  std::vector<Mat<N, N>> inverse;
  std::vector<Mat<N, D>> loading;
};

template <int N, int D>
struct PathBundle {
  TimeGrid grid{1.0, 1};
  NoisePath<D> noise;
  std::vector<Vec<N>> states;
  double theta = 0.0;
  std::optional<JacobianTrack<N, D>> jacobian;
  /// Copied from SdeModel::affine_additive: Jacobians and noise loadings do
  /// not depend on the realized path.
  bool deterministic_jacobian = false;

  std::size_t steps() const { return grid.steps(); }
  bool has_jacobian() const { return jacobian.has_value(); }
};

template <int D>
NoisePath<D> generate_noise(std::uint64_t master_seed, std::uint64_t path_index,
                            const TimeGrid& grid) {
  NoisePath<D> out;
  out.stream = StreamKey(master_seed, path_index);
  const double scale = std::sqrt(grid.dt());
  out.increments.resize(grid.steps());
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    auto& inc = out.increments[k];
    for (int j = 0; j < D; j += 2) {
      const auto z = out.stream.normals(StreamTag::kIncrements, static_cast<std::uint32_t>(k),
                                        static_cast<std::uint32_t>(j / 2));
      inc[j] = scale * z[0];
      if (j + 1 < D) inc[j + 1] = scale * z[1];
    }
  }
  return out;
}

namespace detail {

template <int N>
bool all_finite(const Vec<N>& x) {
  return x.allFinite();
}

template <int N, int D>
Mat<N, N> step_jacobian(const SdeModel<N, D>& model, const Vec<N>& x, double t,
                        double theta, double dt, const Vec<D>& dw) {
  Mat<N, N> j = Mat<N, N>::Identity() + model.drift_dx(x, t, theta) * dt;
  const auto dsigma = model.diffusion_dx(x, t);
  for (int c = 0; c < D; ++c) j += dsigma[c] * dw[c];
  return j;
}

// Advances states (and optionally the Jacobian track) from step `from` to M.
// states[from] must already be set; forward[from] / inverse[from] too when
// the track is present.
template <int N, int D>
void euler_forward(const SdeModel<N, D>& model, PathBundle<N, D>& b, std::size_t from) {
  const double dt = b.grid.dt();
  const std::size_t m = b.grid.steps();
  for (std::size_t k = from; k < m; ++k) {
    const double t = b.grid.time(k);
    const Vec<N>& x = b.states[k];
    const Vec<D>& dw = b.noise.increments[k];
    const Mat<N, D> sigma = model.diffusion(x, t);
    b.states[k + 1] = x + model.drift(x, t, b.theta) * dt + sigma * dw;
    if (!all_finite<N>(b.states[k + 1])) {
      throw Error(ErrorKind::kNonFiniteState,
                  "state became non-finite at step " + std::to_string(k + 1), k + 1);
    }
    if (b.jacobian) {
      auto& jt = *b.jacobian;
      const Mat<N, N> jk = step_jacobian(model, x, t, b.theta, dt, dw);
      jt.forward[k + 1] = jk * jt.forward[k];
      Mat<N, N> inv;
      bool invertible = true;
      if constexpr (N <= 4) {
        jt.forward[k + 1].computeInverseWithCheck(inv, invertible, 0.0);
      } else {
        Eigen::FullPivLU<Mat<N, N>> lu(jt.forward[k + 1]);
        invertible = lu.isInvertible();
        if (invertible) inv = lu.inverse();
      }
      const double cond = invertible ? jt.forward[k + 1].cwiseAbs().colwise().sum().maxCoeff() *
                                           inv.cwiseAbs().colwise().sum().maxCoeff()
                                     : INFINITY;
      if (!invertible || !(cond <= 1e12)) {
        throw Error(ErrorKind::kSingularJacobian,
                    "Jacobian is numerically singular at step " + std::to_string(k + 1),
                    k + 1);
      }
      jt.inverse[k + 1] = inv;
      jt.loading[k] = inv * sigma;
    }
  }
}

template <int N, int D>
JacobianTrack<N, D> make_track(std::size_t steps) {
  JacobianTrack<N, D> jt;
  jt.forward.resize(steps + 1);
  jt.inverse.resize(steps + 1);
  jt.loading.resize(steps);
  jt.forward[0].setIdentity();
  jt.inverse[0].setIdentity();
  return jt;
}

}  // namespace detail

template <int N, int D>
PathBundle<N, D> simulate_path(const SdeModel<N, D>& model, double theta, const VecArg<N>& x0,
                               const TimeGrid& grid, NoisePath<D> noise,
                               bool with_jacobian) {
  if (noise.increments.size() != grid.steps()) {
    throw Error(ErrorKind::kInvalidArgument, "noise length does not match the grid");
  }
  PathBundle<N, D> b;
  b.grid = grid;
  b.noise = std::move(noise);
  b.theta = theta;
  b.deterministic_jacobian = model.affine_additive;
  b.states.resize(grid.steps() + 1);
  b.states[0] = x0;
  if (!detail::all_finite<N>(x0)) {
    throw Error(ErrorKind::kNonFiniteState, "initial state is non-finite", 0);
  }
  if (with_jacobian) b.jacobian = detail::make_track<N, D>(grid.steps());
  detail::euler_forward(model, b, 0);
  return b;
}

/// Restarts `bundle` at `from_step` with state `new_state`, evolving by Euler
/// with `noise` from there on. Steps before `from_step` are kept. When the
/// bundle carries Jacobians, Y at `from_step` is rebuilt from step
/// `from_step - 1` using the supplied increment, so a replaced increment is
/// reflected in the track.
template <int N, int D>
PathBundle<N, D> resume_path(const SdeModel<N, D>& model, const PathBundle<N, D>& bundle,
                             std::size_t from_step, const VecArg<N>& new_state,
                             NoisePath<D> noise) {
  const std::size_t m = bundle.grid.steps();
  if (from_step > m) throw Error(ErrorKind::kInvalidArgument, "resume step beyond horizon");
  if (noise.increments.size() != m) {
    throw Error(ErrorKind::kInvalidArgument, "noise length does not match the grid");
  }
  PathBundle<N, D> out;
  out.grid = bundle.grid;
  out.theta = bundle.theta;
  out.deterministic_jacobian = bundle.deterministic_jacobian;
  out.noise = std::move(noise);
  out.states = bundle.states;
  out.states[from_step] = new_state;
  if (!detail::all_finite<N>(new_state)) {
    throw Error(ErrorKind::kNonFiniteState, "resumed state is non-finite", from_step);
  }
  if (bundle.jacobian) {
    out.jacobian = bundle.jacobian;
    if (from_step > 0) {
      // Re-run the single step into from_step for the Jacobian only.
      auto& jt = *out.jacobian;
      const std::size_t k = from_step - 1;
      const double t = out.grid.time(k);
      const Vec<N>& x = out.states[k];
      const Mat<N, N> jk =
          detail::step_jacobian(model, x, t, out.theta, out.grid.dt(), out.noise.increments[k]);
      jt.forward[from_step] = jk * jt.forward[k];
      jt.inverse[from_step] = jt.forward[from_step].inverse();
      jt.loading[k] = jt.inverse[from_step] * model.diffusion(x, t);
    }
  }
  detail::euler_forward(model, out, from_step);
  return out;
}

/// Re-reads a simulated trajectory under parameter `theta`: states are kept,
/// increments are recovered from sigma(X_k) dW_k = X_{k+1} - X_k - b dt, and
/// Jacobians are recomputed at `theta`. Requires square, invertible sigma.
template <int N, int D>
PathBundle<N, D> reinterpret_path(const SdeModel<N, D>& model, const PathBundle<N, D>& bundle,
                                  double theta) {
  static_assert(N == D, "increment recovery needs a square diffusion matrix");
  PathBundle<N, D> out;
  out.grid = bundle.grid;
  out.theta = theta;
  out.deterministic_jacobian = bundle.deterministic_jacobian;
  out.noise.stream = bundle.noise.stream;
  out.states = bundle.states;
  const std::size_t m = bundle.grid.steps();
  const double dt = bundle.grid.dt();
  out.noise.increments.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double t = out.grid.time(k);
    const Vec<N>& x = out.states[k];
    const Vec<N> resid = out.states[k + 1] - x - model.drift(x, t, theta) * dt;
    const Mat<N, D> sigma = model.diffusion(x, t);
    if constexpr (N == 1) {
      if (sigma(0, 0) == 0.0) {
        throw Error(ErrorKind::kSingularDiffusion, "zero diffusion", k);
      }
      out.noise.increments[k][0] = resid[0] / sigma(0, 0);
    } else {
      Eigen::FullPivLU<Mat<N, D>> lu(sigma);
      if (!lu.isInvertible()) {
        throw Error(ErrorKind::kSingularDiffusion, "singular diffusion matrix", k);
      }
      out.noise.increments[k] = lu.solve(resid);
    }
  }
  if (bundle.jacobian) {
    out.jacobian = detail::make_track<N, D>(m);
    auto& jt = *out.jacobian;
    for (std::size_t k = 0; k < m; ++k) {
      const double t = out.grid.time(k);
      const Vec<N>& x = out.states[k];
      const Mat<N, N> jk =
          detail::step_jacobian(model, x, t, theta, dt, out.noise.increments[k]);
      jt.forward[k + 1] = jk * jt.forward[k];
      jt.inverse[k + 1] = jt.forward[k + 1].inverse();
      jt.loading[k] = jt.inverse[k + 1] * model.diffusion(x, t);
    }
  }
  return out;
}

}  // namespace malliwd
