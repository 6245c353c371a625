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

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "malliwd/error.hpp"
#include "malliwd/path.hpp"

namespace malliwd {

enum class FunctionalKind { kTerminalMarginal, kInteriorMarginal, kIntegral, kCustom };

/// A real functional of a simulated path together with its discrete
/// Malliavin derivative. `derivative(b)[k]` is the sensitivity to the
/// increment over [t_k, t_{k+1}); the last entry (k = M) is zero.
template <int N, int D>
struct PathFunctional {
  using Bundle = PathBundle<N, D>;

  std::function<double(const Bundle&)> value;
  std::function<std::vector<Vec<D>>(const Bundle&)> derivative;
  FunctionalKind kind = FunctionalKind::kCustom;
  /// Affine in the state; with an affine-additive model this makes the
  /// derivative path-independent.
  bool linear = false;
  /// Grid index of a marginal functional.
  std::optional<std::size_t> step;

  Vec<D> malliavin_derivative(const Bundle& b, std::size_t s) const {
    return derivative(b).at(s);
  }
};

namespace detail {

template <int N, int D>
const JacobianTrack<N, D>& require_jacobian(const PathBundle<N, D>& b) {
  if (!b.jacobian) {
    throw Error(ErrorKind::kMissingJacobian, "path was simulated without Jacobians");
  }
  return *b.jacobian;
}

}  // namespace detail

/// phi(X_{t_step}) with gradient grad_phi.
template <int N, int D>
PathFunctional<N, D> marginal(std::size_t step, std::function<double(const Vec<N>&)> phi,
                              std::function<Vec<N>(const Vec<N>&)> grad_phi,
                              FunctionalKind kind, bool linear = false) {
  PathFunctional<N, D> f;
  f.kind = kind;
  f.linear = linear;
  f.step = step;
  f.value = [step, phi](const PathBundle<N, D>& b) { return phi(b.states.at(step)); };
  f.derivative = [step, grad_phi](const PathBundle<N, D>& b) {
    const auto& jt = detail::require_jacobian(b);
    std::vector<Vec<D>> out(b.steps() + 1, Vec<D>::Zero());
    // grad^T Y_step, then times the loading of each earlier increment.
    const Eigen::Matrix<double, 1, N> row = grad_phi(b.states.at(step)).transpose() * jt.forward[step];
    for (std::size_t k = 0; k < step; ++k) out[k] = (row * jt.loading[k]).transpose();
    return out;
  };
  return f;
}

/// (X^{component}_{t_step})^power.
template <int N, int D>
PathFunctional<N, D> marginal_power(const TimeGrid& grid, std::size_t step, int power,
                                    int component = 0) {
  const auto kind = step == grid.steps() ? FunctionalKind::kTerminalMarginal
                                         : FunctionalKind::kInteriorMarginal;
  return marginal<N, D>(
      step, [power, component](const Vec<N>& x) { return std::pow(x[component], power); },
      [power, component](const Vec<N>& x) {
        Vec<N> g = Vec<N>::Zero();
        g[component] = power == 0 ? 0.0 : power * std::pow(x[component], power - 1);
        return g;
      },
      kind, power == 1);
}

/// Left-point Riemann sum of h(X_s) over [0, T].
template <int N, int D>
PathFunctional<N, D> integral(std::function<double(const Vec<N>&)> h,
                              std::function<Vec<N>(const Vec<N>&)> grad_h,
                              bool linear = false) {
  PathFunctional<N, D> f;
  f.kind = FunctionalKind::kIntegral;
  f.linear = linear;
  f.value = [h](const PathBundle<N, D>& b) {
    const double dt = b.grid.dt();
    double acc = 0.0;
    for (std::size_t k = 0; k < b.steps(); ++k) acc += h(b.states[k]) * dt;
    return acc;
  };
  f.derivative = [grad_h](const PathBundle<N, D>& b) {
    const auto& jt = detail::require_jacobian(b);
    const std::size_t m = b.steps();
    const double dt = b.grid.dt();
    std::vector<Vec<D>> out(m + 1, Vec<D>::Zero());
    // suffix[j] = sum_{k > j, k < M} grad_h(X_k)^T Y_k dt
    Eigen::Matrix<double, 1, N> suffix = Eigen::Matrix<double, 1, N>::Zero();
    for (std::size_t j = m; j-- > 0;) {
      if (j + 1 < m) suffix += grad_h(b.states[j + 1]).transpose() * jt.forward[j + 1] * dt;
      out[j] = (suffix * jt.loading[j]).transpose();
    }
    return out;
  };
  return f;
}

template <int N, int D>
PathFunctional<N, D> constant_functional(double c) {
  PathFunctional<N, D> f;
  f.kind = FunctionalKind::kCustom;
  f.linear = true;
  f.value = [c](const PathBundle<N, D>&) { return c; };
  f.derivative = [](const PathBundle<N, D>& b) {
    return std::vector<Vec<D>>(b.steps() + 1, Vec<D>::Zero());
  };
  return f;
}

}  // namespace malliwd
