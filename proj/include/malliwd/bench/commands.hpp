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
// Experiment drivers behind the command-line subcommands.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "malliwd/bench/config.hpp"
#include "malliwd/bench/svg.hpp"
#include "malliwd/bench/table.hpp"
#include "malliwd/functional.hpp"
#include "malliwd/malliavin.hpp"
#include "malliwd/numeric.hpp"
#include "malliwd/optimizer.hpp"
#include "malliwd/ou.hpp"
#include "malliwd/rng.hpp"
#include "malliwd/weak_derivative.hpp"

namespace malliwd::bench {

struct CommandOutput {
  ResultTable table;
  std::optional<PlotSpec> plot;
  /// Lines for standard output.
  std::vector<std::string> summary;
  /// Extra manifest entries.
  std::vector<std::pair<std::string, std::string>> manifest;
  /// Numerical failure after partial results (exit code 3).
  std::optional<ErrorKind> failure;
  std::string failure_message;
};

/// Scalar benchmark: loss X_T^p under the constraint X_{obs} = 0, obs = M / 2.
struct Problem {
  ScalarModel model;
  TimeGrid grid;
  std::size_t observe_step;
  PathFunctional<1, 1> ell;
  PathFunctional<1, 1> g;
  WeightRule<1, 1> rule;
  Vec<1> x0;
};

inline ScalarModel make_model(const RunConfig& c) {
  if (c.model == "mean-reverting") return mean_reverting_model(c.mu, c.sigma);
  if (c.model == "brownian") return brownian_model(c.sigma);
  return ou_model(c.sigma);
}

inline Problem make_problem(const RunConfig& c, double horizon, std::size_t steps) {
  const TimeGrid grid(horizon, steps);
  const std::size_t obs = steps / 2;
  Problem p{make_model(c),
            grid,
            obs,
            marginal_power<1, 1>(grid, steps, c.payoff_power()),
            marginal_power<1, 1>(grid, obs, 1),
            WeightRule<1, 1>{},
            Vec<1>::Constant(c.x0)};
  p.rule.kind = c.weight == "reciprocal" ? WeightKind::kReciprocal : WeightKind::kCanonical;
  return p;
}

namespace detail {

// Drift theta (mu - x) parameters of the configured model.
inline std::pair<double, double> linear_drift(const RunConfig& c, double theta) {
  if (c.model == "brownian") return {0.0, 0.0};
  return {theta, c.model == "mean-reverting" ? c.mu : 0.0};
}

}  // namespace detail

/// Closed-form E[l | X_obs = 0] in continuous time.
inline double closed_form_loss(const RunConfig& c, const Problem& p, double theta) {
  const auto [th, mu] = detail::linear_drift(c, theta);
  const double tau = p.grid.horizon() - p.grid.time(p.observe_step);
  const auto m = ou::restart_moments(th, c.sigma, mu, tau);
  return c.payoff_power() == 2 ? m.second() : m.mean;
}

/// Same quantity for the Euler chain on the simulation grid.
inline double euler_reference_loss(const RunConfig& c, const Problem& p, double theta) {
  const auto [th, mu] = detail::linear_drift(c, theta);
  const auto m = ou::euler_restart_moments(th, c.sigma, mu, p.grid.dt(),
                                           p.grid.steps() - p.observe_step);
  return c.payoff_power() == 2 ? m.second() : m.mean;
}

inline double closed_form_gradient(const RunConfig& c, const Problem& p, double theta) {
  const double h = 1e-5 * std::max(1.0, std::abs(theta));
  return (closed_form_loss(c, p, theta + h) - closed_form_loss(c, p, theta - h)) / (2.0 * h);
}

inline std::string seed_text(std::uint64_t s) { return std::to_string(s); }

inline CommandOutput estimate_loss(const RunConfig& c) {
  const auto p = make_problem(c, c.horizon, c.steps);
  const auto r = conditional_loss_estimate(p.model, c.theta, p.ell, p.g, p.rule, c.paths, c.seed,
                                           p.grid, p.x0);
  CommandOutput out;
  out.table.columns = {"estimate", "std_error", "acceptance_fraction", "closed_form_reference",
                       "n_paths", "seed"};
  const double ref = closed_form_loss(c, p, c.theta);
  out.table.add_row({r.quotient, r.std_error, r.acceptance_fraction, ref,
                     static_cast<std::int64_t>(r.n_paths), seed_text(c.seed)});
  out.summary.push_back("estimate = " + format_double(r.quotient) + " +- " +
                        format_double(r.std_error) + " (closed form " + format_double(ref) + ")");
  return out;
}

inline CommandOutput estimate_grad(const RunConfig& c) {
  const auto p = make_problem(c, c.horizon, c.steps);
  const auto r = counterfactual_gradient(p.model, c.theta, p.ell, p.g, p.rule, p.grid, p.x0,
                                         c.paths, c.branch_mode(), c.seed);
  CommandOutput out;
  out.table.columns = {"loss", "gradient", "se_loss", "se_gradient", "e1", "e2", "grad_e1",
                       "grad_e2", "closed_form_gradient", "n_paths", "seed"};
  const double ref = closed_form_gradient(c, p, c.theta);
  out.table.add_row({r.loss, r.gradient, r.se_loss, r.se_gradient, r.e1, r.e2, r.grad_e1,
                     r.grad_e2, ref, static_cast<std::int64_t>(r.n_paths), seed_text(c.seed)});
  out.summary.push_back("gradient = " + format_double(r.gradient) + " +- " +
                        format_double(r.se_gradient) + " (closed form " + format_double(ref) +
                        ")");
  return out;
}

inline CommandOutput bench_convergence(const RunConfig& c) {
  const auto p = make_problem(c, c.horizon, c.steps);
  const double ref = euler_reference_loss(c, p, c.theta);
  const std::size_t levels = c.path_counts.size();
  CommandOutput out;
  out.table.columns = {"n_paths", "rmse_vs_reference", "mean_std_error", "reference"};
  std::vector<double> ns, rmse, mse_se;
  std::size_t flagged = 0;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t n = c.path_counts[l];
    CompensatedSum sq, se;
    for (std::size_t r = 0; r < c.replications; ++r) {
      const auto est = conditional_loss_estimate(p.model, c.theta, p.ell, p.g, p.rule, n,
                                                 derive_seed(c.seed, r * levels + l), p.grid,
                                                 p.x0, DenominatorPolicy::kReport);
      if (!est.denominator_reliable) ++flagged;
      if (!std::isfinite(est.quotient)) {
        throw Error(ErrorKind::kDegenerateDenominator, "zero denominator in a replication");
      }
      sq.add((est.quotient - ref) * (est.quotient - ref));
      se.add(est.std_error);
    }
    const double reps = static_cast<double>(c.replications);
    ns.push_back(static_cast<double>(n));
    rmse.push_back(std::sqrt(sq.value() / reps));
    mse_se.push_back(se.value() / reps);
    out.table.add_row({static_cast<std::int64_t>(n), rmse.back(), mse_se.back(), ref});
  }
  PlotSpec plot{"Conditional loss: RMSE against path count", "paths N", "RMSE", true, true, {}};
  plot.series.push_back({"RMSE", ns, rmse});
  plot.series.push_back({"mean reported SE", ns, mse_se});
  Series guide{"N^-1/2", ns, {}, true};
  for (double n : ns) guide.y.push_back(rmse.front() * std::sqrt(ns.front() / n));
  plot.series.push_back(guide);
  out.plot = plot;
  out.manifest.emplace_back("reference", format_double(ref));
  out.manifest.emplace_back("unreliable_denominators", std::to_string(flagged));
  if (levels >= 2) {
    const double slope = loglog_slope(ns, rmse);
    out.summary.push_back("slope = " + format_double(slope));
    out.manifest.emplace_back("slope", format_double(slope));
  } else {
    out.summary.push_back("slope omitted (single path count)");
  }
  out.manifest.emplace_back("low_confidence", c.replications == 1 ? "true" : "false");
  return out;
}

struct VarianceResult {
  std::vector<double> horizons;
  /// variances[e][h] for estimator e in config order.
  std::vector<std::vector<double>> variances;
};

inline VarianceResult variance_scan(const RunConfig& c) {
  VarianceResult res;
  res.horizons = c.horizons;
  res.variances.assign(c.estimators.size(), std::vector<double>(c.horizons.size(), 0.0));
  const std::size_t nh = c.horizons.size();
  for (std::size_t h = 0; h < nh; ++h) {
    const double horizon = c.horizons[h];
    const auto p = make_problem(c, horizon, steps_for(horizon, c.dt));
    for (std::size_t e = 0; e < c.estimators.size(); ++e) {
      CompensatedSum pooled;
      for (std::size_t r = 0; r < c.replications; ++r) {
        const std::uint64_t seed = derive_seed(c.seed, r * nh + h);
        const auto rep =
            c.estimators[e] == "wd"
                ? hj_gradient(p.model, c.theta, p.x0, p.grid, p.ell, c.paths, c.branch_mode(), seed)
                : score_function_gradient(p.model, c.theta, p.x0, p.grid, p.ell, c.paths, seed);
        pooled.add(rep.variance);
      }
      res.variances[e][h] = pooled.value() / static_cast<double>(c.replications);
    }
  }
  return res;
}

inline CommandOutput bench_variance(const RunConfig& c) {
  const auto res = variance_scan(c);
  CommandOutput out;
  out.table.columns.push_back("T");
  for (const auto& e : c.estimators) out.table.columns.push_back("var_" + e);
  for (std::size_t h = 0; h < res.horizons.size(); ++h) {
    std::vector<Cell> row{res.horizons[h]};
    for (const auto& v : res.variances) row.emplace_back(v[h]);
    out.table.add_row(std::move(row));
  }
  PlotSpec plot{"Per-path gradient variance against horizon", "horizon T", "variance", true, true,
                {}};
  for (std::size_t e = 0; e < c.estimators.size(); ++e) {
    plot.series.push_back({c.estimators[e] == "wd" ? "weak derivative" : "score function",
                           res.horizons, res.variances[e]});
    if (res.horizons.size() >= 2) {
      const double slope = loglog_slope(res.horizons, res.variances[e]);
      const double ratio = res.variances[e].back() / res.variances[e].front();
      out.summary.push_back("slope_" + c.estimators[e] + " = " + format_double(slope) +
                            ", ratio_" + c.estimators[e] + " = " + format_double(ratio));
      out.manifest.emplace_back("slope_" + c.estimators[e], format_double(slope));
      out.manifest.emplace_back("ratio_" + c.estimators[e], format_double(ratio));
    }
  }
  if (res.horizons.size() < 2) out.summary.push_back("slopes omitted (single horizon)");
  out.plot = plot;
  return out;
}

inline CommandOutput optimize(const RunConfig& c) {
  const auto p = make_problem(c, c.horizon, c.steps);
  OptimizerConfig oc;
  oc.theta0 = c.theta0;
  oc.step_size = c.step_size;
  oc.n_iterations = c.iterations;
  oc.paths_per_iteration = c.paths;
  oc.theta_min = c.theta_min;
  oc.theta_max = c.theta_max;
  oc.gradient_mode = c.branch_mode();
  oc.master_seed = c.seed;
  const auto trace = run_sgd(p.model, p.ell, p.g, p.rule, oc, p.grid, p.x0);
  CommandOutput out;
  out.table.columns = {"iter", "theta", "loss", "gradient", "se_loss", "se_gradient"};
  std::vector<double> it, th;
  for (const auto& r : trace.records) {
    out.table.add_row({static_cast<std::int64_t>(r.iteration), r.theta, r.loss, r.gradient,
                       r.se_loss, r.se_gradient});
    it.push_back(static_cast<double>(r.iteration));
    th.push_back(r.theta);
  }
  PlotSpec plot{"Projected SGD iterates", "iteration", "theta", false, false, {}};
  plot.series.push_back({"theta_n", it, th});
  if (!it.empty()) {
    plot.series.push_back({"theta_min", {it.front(), it.back()}, {c.theta_min, c.theta_min}, true});
    plot.series.push_back({"theta_max", {it.front(), it.back()}, {c.theta_max, c.theta_max}, true});
  }
  out.plot = plot;
  out.summary.push_back("final theta = " + format_double(trace.final_theta));
  out.manifest.emplace_back("final_theta", format_double(trace.final_theta));
  if (trace.failure) {
    out.failure = trace.failure;
    out.failure_message = trace.failure_message;
  }
  return out;
}

}  // namespace malliwd::bench
