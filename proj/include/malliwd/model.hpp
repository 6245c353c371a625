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

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

#include "malliwd/error.hpp"
#include "malliwd/rng.hpp"

namespace malliwd {

template <int Rows>
using Vec = Eigen::Matrix<double, Rows, 1>;

/// Non-deducing spelling of Vec<N> so Eigen expressions bind to parameters.
template <int Rows>
using VecArg = std::type_identity_t<Vec<Rows>>;

template <int Rows, int Cols>
using Mat = Eigen::Matrix<double, Rows, Cols>;

/// Uniform time grid t_k = k * T / M, k = 0..M.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw Error(ErrorKind::kInvalidArgument, "time horizon must be positive");
    }
    if (steps == 0) throw Error(ErrorKind::kInvalidArgument, "grid needs at least one step");
  }

  double horizon() const { return horizon_; }
  std::size_t steps() const { return steps_; }
  double dt() const { return horizon_ / static_cast<double>(steps_); }
  double time(std::size_t k) const {
    return k == steps_ ? horizon_ : static_cast<double>(k) * dt();
  }
  /// Nearest grid index to time t.
  std::size_t step_at(double t) const {
    return static_cast<std::size_t>(std::llround(t / dt()));
  }

 private:
  double horizon_;
  std::size_t steps_;
};

/// Scalar-parameter diffusion dX = b_theta(X, t) dt + sigma(X, t) dW with
/// state dimension N and noise dimension D.
template <int N, int D>
struct SdeModel {
  using State = Vec<N>;
  using Noise = Vec<D>;

  std::string name;
  std::function<State(const State&, double, double)> drift;
  std::function<State(const State&, double, double)> drift_dtheta;
  std::function<Mat<N, N>(const State&, double, double)> drift_dx;
  std::function<Mat<N, D>(const State&, double)> diffusion;
  /// Entry j is the state Jacobian of column j of sigma.
  std::function<std::array<Mat<N, N>, D>(const State&, double)> diffusion_dx;
  /// True when drift_dx does not depend on the state and sigma is constant,
  /// so the pathwise Jacobian and D_s X_t are deterministic.
  bool affine_additive = false;
};

using ScalarModel = SdeModel<1, 1>;

/// dX = -theta X dt + sigma dW.
inline ScalarModel ou_model(double sigma) {
  ScalarModel m;
  m.name = "ou";
  m.drift = [](const Vec<1>& x, double, double theta) -> Vec<1> { return -theta * x; };
  m.drift_dtheta = [](const Vec<1>& x, double, double) -> Vec<1> { return -x; };
  m.drift_dx = [](const Vec<1>&, double, double theta) {
    return Mat<1, 1>::Constant(-theta);
  };
  m.diffusion = [sigma](const Vec<1>&, double) { return Mat<1, 1>::Constant(sigma); };
  m.diffusion_dx = [](const Vec<1>&, double) {
    return std::array<Mat<1, 1>, 1>{Mat<1, 1>::Zero()};
  };
  m.affine_additive = true;
  return m;
}

/// dX = theta (mu - X) dt + sigma dW.
inline ScalarModel mean_reverting_model(double mu, double sigma) {
  ScalarModel m;
  m.name = "mean-reverting";
  m.drift = [mu](const Vec<1>& x, double, double theta) -> Vec<1> {
    return theta * (Vec<1>::Constant(mu) - x);
  };
  m.drift_dtheta = [mu](const Vec<1>& x, double, double) -> Vec<1> {
    return Vec<1>::Constant(mu) - x;
  };
  m.drift_dx = [](const Vec<1>&, double, double theta) {
    return Mat<1, 1>::Constant(-theta);
  };
  m.diffusion = [sigma](const Vec<1>&, double) { return Mat<1, 1>::Constant(sigma); };
  m.diffusion_dx = [](const Vec<1>&, double) {
    return std::array<Mat<1, 1>, 1>{Mat<1, 1>::Zero()};
  };
  m.affine_additive = true;
  return m;
}

/// Driftless dX = sigma dW (X is a scaled Brownian motion).
inline ScalarModel brownian_model(double sigma = 1.0) {
  ScalarModel m;
  m.name = "brownian";
  m.drift = [](const Vec<1>&, double, double) -> Vec<1> { return Vec<1>::Zero(); };
  m.drift_dtheta = [](const Vec<1>&, double, double) -> Vec<1> { return Vec<1>::Zero(); };
  m.drift_dx = [](const Vec<1>&, double, double) { return Mat<1, 1>::Zero(); };
  m.diffusion = [sigma](const Vec<1>&, double) { return Mat<1, 1>::Constant(sigma); };
  m.diffusion_dx = [](const Vec<1>&, double) {
    return std::array<Mat<1, 1>, 1>{Mat<1, 1>::Zero()};
  };
  m.affine_additive = true;
  return m;
}

/// Result of comparing drift_dtheta against a central difference of drift.
struct DriftSensitivityCheck {
  bool consistent = true;
  double worst_relative_error = 0.0;
};

/// Probes drift_dtheta at `probes` random states in [-scale, scale]^N and
/// times in [0, horizon], comparing to a central difference in theta.
template <int N, int D>
DriftSensitivityCheck check_drift_dtheta(const SdeModel<N, D>& model, double theta,
                                         double horizon, std::size_t probes = 32,
                                         double scale = 2.0, double tol = 1e-5,
                                         std::uint64_t seed = 0x5eed) {
  DriftSensitivityCheck out;
  const double h = 1e-6 * std::max(1.0, std::abs(theta));
  for (std::size_t p = 0; p < probes; ++p) {
    const StreamKey key(seed, p);
    Vec<N> x;
    for (int i = 0; i < N; ++i) {
      x[i] = scale * (2.0 * key.uniforms(StreamTag::kIncrements, 0, i).first - 1.0);
    }
    const double t = horizon * key.uniforms(StreamTag::kBranch, 0).second;
    const Vec<N> fd =
        (model.drift(x, t, theta + h) - model.drift(x, t, theta - h)) / (2.0 * h);
    const Vec<N> exact = model.drift_dtheta(x, t, theta);
    const double denom = std::max(1.0, exact.cwiseAbs().maxCoeff());
    const double err = (fd - exact).cwiseAbs().maxCoeff() / denom;
    out.worst_relative_error = std::max(out.worst_relative_error, err);
  }
  out.consistent = out.worst_relative_error <= tol;
  return out;
}

}  // namespace malliwd
