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
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "malliwd/bench/table.hpp"
#include "malliwd/weak_derivative.hpp"

namespace malliwd::bench {

/// Invalid run configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::string config_file;
  std::string out = ".";
  std::uint64_t seed = 20260101;

  std::string model = "ou";  // ou | mean-reverting | brownian
  double theta = 1.0;
  double sigma = 1.0;
  double mu = 1.0;  // long-run level of the mean-reverting model
  double x0 = 0.0;
  double horizon = 1.0;
  std::size_t steps = 200;

  std::size_t paths = 100000;
  std::string payoff = "square";  // square: X_T^2, level: X_T
  std::string weight = "canonical";
  std::string mode = "random-k";

  std::size_t replications = 50;
  std::vector<std::size_t> path_counts{100, 1000, 10000, 100000};
  std::vector<double> horizons{2.0, 4.0, 8.0, 16.0};
  double dt = 0.05;
  std::vector<std::string> estimators{"wd", "sf"};

  double theta0 = 2.5;
  double step_size = 0.05;
  std::size_t iterations = 200;
  double theta_min = 0.2;
  double theta_max = 3.0;

  BranchMode branch_mode() const {
    return mode == "sum-over-k" ? BranchMode::kSumOverK : BranchMode::kRandomK;
  }
  int payoff_power() const { return payoff == "square" ? 2 : 1; }
};

/// Per-command defaults.
inline RunConfig defaults_for(const std::string& command) {
  RunConfig c;
  c.command = command;
  if (command == "estimate-grad") {
    c.paths = 20000;
  } else if (command == "bench-variance") {
    c.model = "mean-reverting";
    c.payoff = "level";
    c.mode = "sum-over-k";
    c.paths = 2000;
    c.replications = 8;
  } else if (command == "optimize") {
    c.paths = 10000;
  }
  return c;
}

inline std::size_t steps_for(double horizon, double dt) {
  const double m = horizon / dt;
  const double r = std::round(m);
  if (!(r >= 1.0) || std::abs(m - r) > 1e-9 * std::max(1.0, m)) {
    throw ConfigError("horizon " + format_double(horizon) + " is not a multiple of dt " +
                      format_double(dt));
  }
  return static_cast<std::size_t>(r);
}

inline void validate(const RunConfig& c) {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.model == "ou" || c.model == "mean-reverting" || c.model == "brownian",
          "model must be ou, mean-reverting or brownian");
  require(c.payoff == "square" || c.payoff == "level", "payoff must be square or level");
  require(c.weight == "canonical" || c.weight == "reciprocal",
          "weight must be canonical or reciprocal");
  require(c.mode == "sum-over-k" || c.mode == "random-k", "mode must be sum-over-k or random-k");
  require(std::isfinite(c.theta) && std::isfinite(c.x0) && std::isfinite(c.mu),
          "model parameters must be finite");
  require(c.sigma > 0.0 && std::isfinite(c.sigma), "sigma must be positive");
  require(c.horizon > 0.0 && std::isfinite(c.horizon), "horizon must be positive");
  require(c.steps >= 2, "steps must be at least 2");
  require(c.paths >= 2, "paths must be at least 2");
  require(c.replications >= 1, "replications must be at least 1");
  if (c.command == "bench-convergence") {
    require(!c.path_counts.empty(), "path-counts must not be empty");
    for (auto n : c.path_counts) require(n >= 2, "every path count must be at least 2");
    require(c.model != "brownian", "bench-convergence needs a mean-reverting model");
  }
  if (c.command == "bench-variance") {
    require(!c.horizons.empty(), "horizons must not be empty");
    require(c.dt > 0.0 && std::isfinite(c.dt), "dt must be positive");
    for (double t : c.horizons) require(t > 0.0, "horizons must be positive");
    for (double t : c.horizons) steps_for(t, c.dt);
    require(!c.estimators.empty(), "estimators must not be empty");
    std::set<std::string> seen;
    for (const auto& e : c.estimators) {
      require(e == "wd" || e == "sf", "estimators are wd and sf");
      require(seen.insert(e).second, "estimator listed twice: " + e);
    }
  }
  if (c.command == "optimize") {
    require(c.theta_min < c.theta_max, "theta-min must be below theta-max");
    require(c.step_size >= 0.0, "step-size must be non-negative");
    require(c.iterations >= 1, "iterations must be at least 1");
  }
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += format_double(v[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += v[i];
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

/// Every field as key = value, in the config-file spelling.
inline std::vector<std::pair<std::string, std::string>> echo(const RunConfig& c) {
  return {
      {"command", c.command},
      {"config", c.config_file},
      {"out", c.out},
      {"seed", std::to_string(c.seed)},
      {"model", c.model},
      {"theta", format_double(c.theta)},
      {"sigma", format_double(c.sigma)},
      {"mu", format_double(c.mu)},
      {"x0", format_double(c.x0)},
      {"horizon", format_double(c.horizon)},
      {"steps", std::to_string(c.steps)},
      {"paths", std::to_string(c.paths)},
      {"payoff", c.payoff},
      {"weight", c.weight},
      {"mode", c.mode},
      {"replications", std::to_string(c.replications)},
      {"path-counts", join(c.path_counts)},
      {"horizons", join(c.horizons)},
      {"dt", format_double(c.dt)},
      {"estimators", join(c.estimators)},
      {"theta0", format_double(c.theta0)},
      {"step-size", format_double(c.step_size)},
      {"iterations", std::to_string(c.iterations)},
      {"theta-min", format_double(c.theta_min)},
      {"theta-max", format_double(c.theta_max)},
  };
}

}  // namespace malliwd::bench
