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
// Command-line front end: option binding, dispatch, output files, exit codes.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "malliwd/bench/commands.hpp"
#include "malliwd/bench/config.hpp"
#include "malliwd/bench/svg.hpp"
#include "malliwd/error.hpp"

#ifndef MALLIWD_GIT_DESCRIBE
#define MALLIWD_GIT_DESCRIBE "unknown"
#endif

namespace malliwd::bench {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3 };

inline void bind_options(CLI::App& app, RunConfig& c) {
  app.add_option("--config", c.config_file, "key = value file; command-line flags take precedence");
  app.add_option("--out", c.out, "output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "master seed")->capture_default_str();
  app.add_option("--model", c.model, "ou | mean-reverting | brownian")->capture_default_str();
  app.add_option("--theta", c.theta, "drift parameter")->capture_default_str();
  app.add_option("--sigma", c.sigma, "diffusion coefficient")->capture_default_str();
  app.add_option("--mu", c.mu, "long-run level (mean-reverting model)")->capture_default_str();
  app.add_option("--x0", c.x0, "initial state")->capture_default_str();
  app.add_option("--horizon", c.horizon, "time horizon T")->capture_default_str();
  app.add_option("--steps", c.steps, "Euler steps M")->capture_default_str();
  app.add_option("--paths", c.paths, "Monte-Carlo paths")->capture_default_str();
  app.add_option("--payoff", c.payoff, "square (X_T^2) | level (X_T)")->capture_default_str();
  app.add_option("--weight", c.weight, "canonical | reciprocal")->capture_default_str();
  app.add_option("--mode", c.mode, "sum-over-k | random-k")->capture_default_str();
  app.add_option("--replications", c.replications, "seed replications")->capture_default_str();
  app.add_option("--path-counts", c.path_counts, "path counts to sweep")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--horizons", c.horizons, "horizons to sweep")->delimiter(',')->capture_default_str();
  app.add_option("--dt", c.dt, "fixed step for the horizon sweep")->capture_default_str();
  app.add_option("--estimators", c.estimators, "column order: wd,sf")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--theta0", c.theta0, "initial iterate")->capture_default_str();
  app.add_option("--step-size", c.step_size, "SGD step size")->capture_default_str();
  app.add_option("--iterations", c.iterations, "SGD iterations")->capture_default_str();
  app.add_option("--theta-min", c.theta_min, "lower bound of theta")->capture_default_str();
  app.add_option("--theta-max", c.theta_max, "upper bound of theta")->capture_default_str();
}

/// Reads `key = value` lines; `#` starts a comment. Keys may use '_' for '-'.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  const auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = v.find_last_not_of(" \t\r");
    return v.substr(b, e - b + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    for (char& ch : key) ch = ch == '_' ? '-' : ch;
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
      value = value.substr(1, value.size() - 2);
    }
    std::string compact;
    for (char ch : value) {
      if (ch != ' ' || compact.find(',') == std::string::npos) compact += ch;
    }
    out.emplace_back(key, trim(compact));
  }
  return out;
}

inline void write_outputs(const RunConfig& c, const CommandOutput& result, double wall_seconds) {
  namespace fs = std::filesystem;
  const fs::path dir(c.out);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / (c.command + ".csv"), std::ios::binary);
    result.table.write_csv(csv);
  }
  if (result.plot) {
    std::ofstream svg(dir / (c.command + ".svg"), std::ios::binary);
    svg << render_line_plot(*result.plot);
  }
  std::ofstream man(dir / "manifest.txt", std::ios::binary);
  for (const auto& [k, v] : echo(c)) man << k << " = " << v << '\n';
  man << "version = " << MALLIWD_GIT_DESCRIBE << '\n';
  man << "wall_seconds = " << format_double(wall_seconds) << '\n';
  for (const auto& [k, v] : result.manifest) man << k << " = " << v << '\n';
  if (result.failure) man << "failure = " << error_name(*result.failure) << '\n';
}

/// Runs one subcommand; args exclude the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  static const std::map<std::string, std::string> descriptions{
      {"estimate-loss", "Malliavin estimate of E[X_T^p | X_{T/2} = 0]"},
      {"estimate-grad", "counterfactual gradient of the conditional loss in theta"},
      {"bench-convergence", "RMSE of the conditional-loss estimator against path count"},
      {"bench-variance", "gradient-estimator variance against horizon"},
      {"optimize", "projected SGD on the conditional loss"},
  };
  using Runner = std::function<CommandOutput(const RunConfig&)>;
  const std::map<std::string, Runner> runners{
      {"estimate-loss", estimate_loss},         {"estimate-grad", estimate_grad},
      {"bench-convergence", bench_convergence}, {"bench-variance", bench_variance},
      {"optimize", optimize},
  };

  std::map<std::string, RunConfig> configs;
  const auto parse = [&](CLI::App& app, const std::vector<std::string>& argv) {
    app.require_subcommand(1);
    for (const auto& [name, text] : descriptions) {
      configs[name] = defaults_for(name);
      bind_options(*app.add_subcommand(name, text), configs[name]);
    }
    app.parse(std::vector<std::string>(argv.rbegin(), argv.rend()));
  };

  // First pass finds the subcommand, the config file and the flags given
  // explicitly; file values for the remaining options are then inserted
  // ahead of the user's flags and everything is parsed again.
  std::string command;
  CLI::App app{"malliwd: conditional-loss estimation and counterfactual gradients for SDEs"};
  app.name("malliwd");
  try {
    parse(app, args);
    const auto* sub = app.get_subcommands().front();
    command = sub->get_name();
    const std::string file = configs[command].config_file;
    if (!file.empty()) {
      std::vector<std::string> merged{command};
      for (const auto& [key, value] : read_config_file(file)) {
        const auto* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config") {
          throw ConfigError(file + ": unknown key " + key);
        }
        if (opt->count() == 0) {
          merged.push_back("--" + key);
          merged.push_back(value);
        }
      }
      merged.insert(merged.end(), args.begin() + 1, args.end());
      CLI::App again;
      parse(again, merged);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  RunConfig& c = configs[command];
  try {
    validate(c);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const auto start = std::chrono::steady_clock::now();
  CommandOutput result;
  try {
    result = runners.at(c.command)(c);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    write_outputs(c, result, wall);
  } catch (const std::exception& e) {
    err << "config error: cannot write outputs to " << c.out << ": " << e.what() << '\n';
    return kExitConfig;
  }
  for (const auto& line : result.summary) out << line << '\n';
  if (result.failure) {
    err << "numerical error: " << result.failure_message << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace malliwd::bench
