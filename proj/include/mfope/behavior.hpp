#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"

namespace mfope {

inline constexpr double kDefaultBMin = 1e-4;

/// Integer binomial coefficient; exact for the small n used here.
inline std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t c = 1;
  for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
  return c;
}

/// Probability that A_i = own and that exactly `k` of the n neighbors are
/// treated, under i.i.d. Bernoulli(p) actions. When `own_in_neighborhood`
/// the count includes unit i itself, so only n-1 other units are free.
/// Generic in the number type so it can be evaluated in exact arithmetic.
template <typename Real>
Real match_probability(int n, int own, int k, Real p, bool own_in_neighborhood = false) {
  const Real q = Real(1) - p;
  const Real p_own = own == 1 ? p : q;
  int free = n;
  int needed = k;
  if (own_in_neighborhood) {
    free = n - 1;
    needed = k - own;
  }
  if (needed < 0 || needed > free) return Real(0);
  Real prob = p_own * Real(binomial(free, needed));
  for (int j = 0; j < needed; ++j) prob = prob * p;
  for (int j = 0; j < free - needed; ++j) prob = prob * q;
  return prob;
}

/// b_i for a state-independent Bernoulli(p) behavior policy.
inline double exact_b_i(int n_neighbors, int target_own, double target_mf, double p,
                        bool own_in_neighborhood = false) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("exact_b_i: p must lie in (0,1)");
  if (target_own != 0 && target_own != 1) throw ConfigError("exact_b_i: target_own must be 0 or 1");
  if (n_neighbors < 1) throw ConfigError("exact_b_i: need at least one neighbor");
  const double scaled = n_neighbors * target_mf;
  const double k = std::round(scaled);
  if (std::abs(scaled - k) > 1e-9 || k < 0 || k > n_neighbors)
    throw ConfigError("exact_b_i: n * target_mf is not an achievable count");
  return match_probability<double>(n_neighbors, target_own, static_cast<int>(k), p,
                                   own_in_neighborhood);
}

/// Probability that a Bernoulli(p) joint assignment equals `target` exactly.
inline double exact_b_joint(std::span<const int> target, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("exact_b_joint: p must lie in (0,1)");
  double prob = 1.0;
  for (int a : target) prob *= a == 1 ? p : 1.0 - p;
  return prob;
}

/// 0.5^N: the probability of any fixed assignment under fair coins.
inline double exact_b_joint(std::size_t n_units, double p = 0.5) {
  if (n_units == 0) throw ConfigError("exact_b_joint: N must be >= 1");
  if (p != 0.5) throw ConfigError("exact_b_joint(N, p): only defined for p = 0.5; pass the target");
  return std::ldexp(1.0, -static_cast<int>(n_units));
}

/// Penalized logistic regression of the match indicator on the flattened
/// mean-field triple. Predictions are floored at b_min.
class LogisticBehavior {
 public:
  LogisticBehavior() = default;

  static LogisticBehavior fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& indicator,
                              double ridge = 1.0, double b_min = kDefaultBMin) {
    const auto rows = features.rows();
    if (rows < 50) throw DataError("estimate_b_i: need at least 50 transitions");
    if (indicator.size() != rows) throw ConfigError("estimate_b_i: feature/response length mismatch");
    const double hits = indicator.sum();
    if (hits <= 0.0 || hits >= static_cast<double>(rows))
      throw DataError("estimate_b_i: degenerate response (indicator constant)");

    LogisticBehavior m;
    m.b_min_ = b_min;
    m.mean_ = features.colwise().mean().transpose();
    m.scale_ = ((features.rowwise() - m.mean_.transpose()).array().square().colwise().sum() /
                static_cast<double>(rows))
                   .sqrt()
                   .transpose();
    for (auto& s : m.scale_) s = s > 1e-12 ? s : 1.0;

    const auto d = features.cols();
    Eigen::MatrixXd x(rows, d + 1);
    x.col(0).setOnes();
    x.rightCols(d) = (features.rowwise() - m.mean_.transpose()).array().rowwise() /
                     m.scale_.transpose().array();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
    const double base = hits / static_cast<double>(rows);
    beta(0) = std::log(base / (1.0 - base));
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, ridge);
    penalty(0) = 0.0;

    for (int iter = 0; iter < 100; ++iter) {
      const Eigen::VectorXd eta = x * beta;
      const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
      const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(1e-12);
      const Eigen::VectorXd grad = x.transpose() * (indicator - mu) - penalty.cwiseProduct(beta);
      Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x;
      hess.diagonal() += penalty;
      const Eigen::VectorXd delta = hess.ldlt().solve(grad);
      beta += delta;
      if (delta.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
    m.beta_ = beta;
    return m;
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd z = (x - mean_).cwiseQuotient(scale_);
    const double eta = beta_(0) + beta_.tail(beta_.size() - 1).dot(z);
    return std::clamp(1.0 / (1.0 + std::exp(-eta)), b_min_, 1.0);
  }

  double b_min() const { return b_min_; }

  nlohmann::json to_json() const {
    return {{"kind", "logistic"},
            {"b_min", b_min_},
            {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
            {"scale", std::vector<double>(scale_.data(), scale_.data() + scale_.size())},
            {"beta", std::vector<double>(beta_.data(), beta_.data() + beta_.size())}};
  }

 private:
  Eigen::VectorXd mean_, scale_, beta_;
  double b_min_ = kDefaultBMin;
};

/// Behavior probabilities consumed by the estimators: either the exact
/// Bernoulli(p) experiment or one fitted regressor per unit.
struct BehaviorModel {
  double p = 0.5;
  std::vector<LogisticBehavior> fitted;
  double b_min = kDefaultBMin;

  static BehaviorModel exact(double p, double b_min = kDefaultBMin) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("behavior: p must lie in (0,1)");
    return {p, {}, b_min};
  }
  bool is_exact() const { return fitted.empty(); }
};

}  // namespace mfope
