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

#include "malliwd/model.hpp"

namespace malliwd::testing_models {

// Two-dimensional model with state-dependent, non-commuting coefficients.
inline SdeModel<2, 2> coupled_model() {
  SdeModel<2, 2> m;
  m.name = "coupled";
  m.drift = [](const Vec<2>& x, double t, double th) {
    return Vec<2>(th * (-x[0] + 0.5 * std::sin(x[1])), -x[1] + 0.3 * x[0] + 0.1 * t);
  };
  m.drift_dtheta = [](const Vec<2>& x, double, double) {
    return Vec<2>(-x[0] + 0.5 * std::sin(x[1]), 0.0);
  };
  m.drift_dx = [](const Vec<2>& x, double, double th) {
    Mat<2, 2> j;
    j << -th, 0.5 * th * std::cos(x[1]), 0.3, -1.0;
    return j;
  };
  m.diffusion = [](const Vec<2>& x, double) {
    Mat<2, 2> s;
    s << 1.0 + 0.2 * std::tanh(x[0]), 0.1, 0.0, 0.8 + 0.1 * std::sin(x[0]);
    return s;
  };
  m.diffusion_dx = [](const Vec<2>& x, double) {
    const double sech2 = 1.0 / (std::cosh(x[0]) * std::cosh(x[0]));
    std::array<Mat<2, 2>, 2> d;
    // column 0 of sigma: (1 + 0.2 tanh x0, 0); column 1: (0.1, 0.8 + 0.1 sin x0)
    d[0] << 0.2 * sech2, 0.0, 0.0, 0.0;
    d[1] << 0.0, 0.0, 0.1 * std::cos(x[0]), 0.0;
    return d;
  };
  return m;
}

// Two-dimensional model with a diagonal, state-dependent diffusion.
inline SdeModel<2, 2> diagonal_model() {
  SdeModel<2, 2> m;
  m.name = "diagonal";
  m.drift = [](const Vec<2>& x, double, double th) {
    return Vec<2>(th * (0.5 - x[0]), th * (0.2 * std::sin(x[0]) - 0.5 * x[1]));
  };
  m.drift_dtheta = [](const Vec<2>& x, double, double) {
    return Vec<2>(0.5 - x[0], 0.2 * std::sin(x[0]) - 0.5 * x[1]);
  };
  m.drift_dx = [](const Vec<2>& x, double, double th) {
    Mat<2, 2> j;
    j << -th, 0.0, 0.2 * th * std::cos(x[0]), -0.5 * th;
    return j;
  };
  m.diffusion = [](const Vec<2>& x, double) {
    Mat<2, 2> s = Mat<2, 2>::Zero();
    s(0, 0) = 0.8;
    s(1, 1) = 1.0 + 0.1 * std::cos(x[0]);
    return s;
  };
  m.diffusion_dx = [](const Vec<2>& x, double) {
    std::array<Mat<2, 2>, 2> d;
    d[0].setZero();
    d[1].setZero();
    d[1](1, 0) = -0.1 * std::sin(x[0]);
    return d;
  };
  return m;
}

}  // namespace malliwd::testing_models
