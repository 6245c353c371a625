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

// Reference values for the Ornstein-Uhlenbeck benchmark
// dX = -theta X dt + sigma dW, X_0 = 0, loss X_T^2, constraint X_{T/2} = 0,
// and for its mean-reverting variant dX = theta (mu - X) dt + sigma dW.

#pragma once

#include <cmath>
#include <cstddef>

namespace malliwd::ou {

/// Var(X_t) from X_0 = 0 in continuous time.
inline double variance(double theta, double sigma, double t) {
  return sigma * sigma * (-std::expm1(-2.0 * theta * t)) / (2.0 * theta);
}

/// E[X_T^2 | X_{T/2} = 0]: the process restarts at zero for T/2 more.
inline double conditional_loss(double theta, double sigma, double horizon) {
  return variance(theta, sigma, 0.5 * horizon);
}

inline double conditional_loss_dtheta(double theta, double sigma, double horizon) {
  const double tau = 0.5 * horizon;
  const double e = std::exp(-2.0 * theta * tau);
  return sigma * sigma * (2.0 * theta * tau * e - (1.0 - e)) / (2.0 * theta * theta);
}

/// Var(X_k) of the Euler chain X_{k+1} = (1 - theta dt) X_k + sigma dW_k.
inline double euler_variance(double theta, double sigma, double dt, std::size_t steps) {
  const double a = 1.0 - theta * dt;
  const double a2 = a * a;
  if (a2 == 1.0) return sigma * sigma * dt * static_cast<double>(steps);
  return sigma * sigma * dt * (1.0 - std::pow(a2, static_cast<double>(steps))) / (1.0 - a2);
}

/// Euler-chain counterpart of conditional_loss (M steps, condition at M/2).
inline double euler_conditional_loss(double theta, double sigma, double horizon,
                                     std::size_t steps) {
  return euler_variance(theta, sigma, horizon / static_cast<double>(steps), steps - steps / 2);
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;

  double second() const { return variance + mean * mean; }
};

/// Law of X_{s + tau} given X_s = 0 for dX = theta (mu - X) dt + sigma dW.
inline Moments restart_moments(double theta, double sigma, double mu, double tau) {
  if (theta == 0.0) return {0.0, sigma * sigma * tau};
  return {-mu * std::expm1(-theta * tau), variance(theta, sigma, tau)};
}

/// Euler-chain counterpart of restart_moments over `steps` steps of size dt.
inline Moments euler_restart_moments(double theta, double sigma, double mu, double dt,
                                     std::size_t steps) {
  const double a = 1.0 - theta * dt;
  return {mu * (1.0 - std::pow(a, static_cast<double>(steps))),
          euler_variance(theta, sigma, dt, steps)};
}

}  // namespace malliwd::ou
