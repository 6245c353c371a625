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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace malliwd {

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double sample_mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return compensated_sum(xs) / static_cast<double>(xs.size());
}

/// Unbiased sample covariance (divisor n - 1); zero for n < 2.
inline double sample_covariance(std::span<const double> xs,
                                std::span<const double> ys) {
  const std::size_t n = std::min(xs.size(), ys.size());
  if (n < 2) return 0.0;
  const double mx = sample_mean(xs.first(n));
  const double my = sample_mean(ys.first(n));
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i) acc.add((xs[i] - mx) * (ys[i] - my));
  return acc.value() / static_cast<double>(n - 1);
}

inline double sample_variance(std::span<const double> xs) {
  return sample_covariance(xs, xs);
}

inline double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

/// Delta-method standard error of mean(a) / mean(b).
inline double ratio_standard_error(std::span<const double> a,
                                   std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = sample_mean(a);
  const double mb = sample_mean(b);
  const double q = ma / mb;
  const double v = sample_variance(a) - 2.0 * q * sample_covariance(a, b) +
                   q * q * sample_variance(b);
  return std::sqrt(std::max(v, 0.0) / static_cast<double>(n)) / std::abs(mb);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return sample_covariance(lx, ly) / sample_variance(lx);
}

inline unsigned default_worker_count() {
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) over contiguous blocks. Callers write results
/// by index, so the outcome does not depend on the worker count. The first
/// exception thrown by any worker is rethrown.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned workers = default_worker_count()) {
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace malliwd
