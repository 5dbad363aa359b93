#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "mfope/error.hpp"

namespace mfope {

struct MseResult {
  double mse = 0.0;
  double se = 0.0;
};

/// Mean squared error against `truth`; se = sd(squared errors) / sqrt(n).
inline MseResult mse(std::span<const double> estimates, double truth) {
  const auto n = estimates.size();
  if (n < 2) throw ConfigError("mse: need at least 2 estimates");
  double mean = 0.0;
  for (double e : estimates) mean += (e - truth) * (e - truth);
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double e : estimates) {
    const double d = (e - truth) * (e - truth) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))};
}

/// Same, for precomputed squared errors.
inline MseResult mse_of_squared(std::span<const double> squared) {
  const auto n = squared.size();
  if (n < 2) throw ConfigError("mse: need at least 2 estimates");
  double mean = 0.0;
  for (double s : squared) mean += s;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double s : squared) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))};
}

struct TTestResult {
  double t_stat = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool degenerate = false;  // zero variance in the differences
};

/// One-sided paired t-test of H1: mean(a) < mean(b).
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("paired_t_test: length mismatch");
  const auto n = a.size();
  if (n < 2) throw ConfigError("paired_t_test: need at least 2 pairs");
  TTestResult r;
  r.n = n;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  if (sd == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t_stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_stat = mean < 0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
      r.p_value = mean < 0 ? 0.0 : 1.0;
    }
    return r;
  }
  r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  r.p_value = boost::math::cdf(dist, r.t_stat);
  return r;
}

}  // namespace mfope
