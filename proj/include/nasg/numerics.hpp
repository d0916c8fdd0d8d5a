/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "nasg/error.hpp"

namespace nasg {

/// Scores in the log domain. kNegInf stands for log(0).
using LogScore = double;

inline constexpr LogScore kNegInf = -std::numeric_limits<double>::infinity();

inline LogScore logadd(LogScore a, LogScore b) {
  if (a == kNegInf) {
    return b;
  }
  if (b == kNegInf) {
    return a;
  }
  if (a < b) {
    std::swap(a, b);
  }
  return a + std::log1p(std::exp(b - a));
}

/// Streaming log-sum-exp: keeps a running maximum and a sum scaled to it.
inline LogScore logadd_all(std::span<const LogScore> xs) {
  LogScore max = kNegInf;
  double sum = 0.0;
  for (LogScore x : xs) {
    if (x == kNegInf) {
      continue;
    }
    if (x <= max) {
      sum += std::exp(x - max);
    } else {
      sum = sum * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  if (max == kNegInf) {
    return kNegInf;
  }
  return max + std::log(sum);
}

/// Accumulator for logadd over a stream without materializing it.
class LogAccumulator {
 public:
  void add(LogScore x) {
    value_ = logadd(value_, x);
  }
  LogScore value() const {
    return value_;
  }

 private:
  LogScore value_ = kNegInf;
};

inline constexpr double kDefaultFiniteDiffStep = 1e-5;
inline constexpr double kDefaultFiniteDiffTolerance = 1e-4;

/// Central-difference gradient check. Returns the maximum over coordinates of
/// |analytic - numeric| / max(1, |numeric|).
inline double finite_diff_check(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<const double> params,
    std::span<const double> analytic_grad,
    double step = kDefaultFiniteDiffStep) {
  if (!(step > 0.0)) {
    throw Error(ErrorCode::kInvalidFactor, "finite difference step must be > 0");
  }
  if (params.size() != analytic_grad.size()) {
    throw Error(
        ErrorCode::kDimensionMismatch,
        "parameter and gradient sizes differ");
  }
  std::vector<double> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = loss_fn(probe);
    probe[i] = saved - step;
    const double down = loss_fn(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(
          ErrorCode::kNonFinite,
          "loss is not finite at probe of coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * step);
    const double err =
        std::abs(analytic_grad[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

} // namespace nasg
