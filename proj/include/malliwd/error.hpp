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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace malliwd {

enum class ErrorKind {
  kNonFiniteState,
  kSingularJacobian,
  kMissingJacobian,
  kDegenerateConstraint,
  kNonAdaptedWithoutFactorization,
  kDegenerateDenominator,
  kEmptyKernelMass,
  kSingularDiffusion,
  kInvalidArgument,
};

constexpr std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonFiniteState: return "NonFiniteState";
    case ErrorKind::kSingularJacobian: return "SingularJacobian";
    case ErrorKind::kMissingJacobian: return "MissingJacobian";
    case ErrorKind::kDegenerateConstraint: return "DegenerateConstraint";
    case ErrorKind::kNonAdaptedWithoutFactorization:
      return "NonAdaptedWithoutFactorization";
    case ErrorKind::kDegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::kEmptyKernelMass: return "EmptyKernelMass";
    case ErrorKind::kSingularDiffusion: return "SingularDiffusion";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Structured numerical failure. `step()` carries the grid index where the
/// failure was detected, when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::size_t> step = std::nullopt)
      : std::runtime_error(std::string(error_name(kind)) + ": " + what),
        kind_(kind),
        step_(step) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return error_name(kind_); }
  std::optional<std::size_t> step() const noexcept { return step_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> step_;
};

}  // namespace malliwd
