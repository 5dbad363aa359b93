#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"
#include "mfope/features.hpp"
#include "mfope/kernel.hpp"
#include "mfope/rng.hpp"

namespace mfope {

inline constexpr double kMaxCondition = 1e12;

struct QConfig {
  double mu = 1e-2;       // inner smoother penalty
  double lambda = 1e-3;   // Q-function penalty
  double bandwidth_g = 0.0;  // <= 0: median heuristic
  double bandwidth_q = 0.0;
  std::size_t center_cap = 2000;  // above this many steps, switch to subsampled centers
  bool verify = true;
  std::uint64_t seed = 0;  // subsampling only
};

inline void to_json(nlohmann::json& j, const QConfig& c) {
  j = nlohmann::json{{"mu", c.mu},           {"lambda", c.lambda},
                     {"bandwidth_g", c.bandwidth_g}, {"bandwidth_q", c.bandwidth_q},
                     {"center_cap", c.center_cap},   {"verify", c.verify}};
}

inline QConfig q_config_from_json(const nlohmann::json& j) {
  QConfig c;
  c.mu = j.value("mu", c.mu);
  c.lambda = j.value("lambda", c.lambda);
  c.bandwidth_g = j.value("bandwidth_g", c.bandwidth_g);
  c.bandwidth_q = j.value("bandwidth_q", c.bandwidth_q);
  c.center_cap = j.value("center_cap", c.center_cap);
  c.verify = j.value("verify", c.verify);
  if (!(c.mu > 0) || !(c.lambda > 0)) throw ConfigError("q: mu and lambda must be positive");
  return c;
}

/// Kernel expansion Q(z) = sum_j alpha_j K_Q(center_j, z) plus the value
/// estimate eta. Centers are stored standardized.
struct QModel {
  Eigen::MatrixXd centers;
  Eigen::VectorXd alpha;
  double value = 0.0;
  KernelSpec kernel;
  Standardizer input;
  double mu = 0.0;
  double lambda = 0.0;
};

inline Eigen::VectorXd q_eval(const QModel& m, const Eigen::MatrixXd& z) {
  if (z.cols() != m.centers.cols()) throw ConfigError("q_eval: dimension mismatch");
  return rbf_gram(m.input.apply(z), m.centers, m.kernel.bandwidth) * m.alpha;
}

inline double q_eval_point(const QModel& m, const Eigen::Ref<const Eigen::VectorXd>& z) {
  return q_eval(m, Eigen::MatrixXd(z.transpose()))(0);
}

inline nlohmann::json q_to_json(const QModel& m) {
  std::vector<std::vector<double>> centers;
  for (Eigen::Index r = 0; r < m.centers.rows(); ++r) {
    auto& row = centers.emplace_back();
    for (Eigen::Index c = 0; c < m.centers.cols(); ++c) row.push_back(m.centers(r, c));
  }
  return {{"centers", centers},
          {"alpha", std::vector<double>(m.alpha.data(), m.alpha.data() + m.alpha.size())},
          {"value", m.value},
          {"kernel", m.kernel},
          {"input", m.input},
          {"mu", m.mu},
          {"lambda", m.lambda}};
}

// ---------------------------------------------------------------------------
// Closed-form pieces

/// Gram matrices of one unit's local transitions (standardized inputs).
struct GramPair {
  Eigen::MatrixXd k_g;  // T x T over Z
  Eigen::MatrixXd k_q;  // 2T x 2T over (Z_0..Z_{T-1}, Z*_0..Z*_{T-1})
  Eigen::MatrixXd e;    // K_g^T (K_g + (T-1) mu I)^{-1}

  Eigen::Index horizon() const { return k_g.rows(); }

  /// [-I_T, I_T].
  Eigen::MatrixXd selection() const {
    const auto t = horizon();
    Eigen::MatrixXd c(t, 2 * t);
    c << -Eigen::MatrixXd::Identity(t, t), Eigen::MatrixXd::Identity(t, t);
    return c;
  }
};

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": matrix not positive definite");
  const double rcond = llt.rcond();
  if (!(rcond > 1.0 / kMaxCondition))
    throw NumericError(std::string(what) + ": ill-conditioned system (condition estimate " +
                       std::to_string(1.0 / rcond) + ")");
  return llt;
}

}  // namespace detail

inline GramPair build_grams(const Eigen::MatrixXd& z, const Eigen::MatrixXd& z_star,
                            const KernelSpec& kernel_g, const KernelSpec& kernel_q, double mu) {
  const auto t = z.rows();
  if (t < 2) throw ConfigError("build_grams: need T >= 2");
  if (z_star.rows() != t || z_star.cols() != z.cols()) throw ConfigError("build_grams: Z/Z* shape mismatch");
  GramPair g;
  g.k_g = rbf_gram(z, z, kernel_g.bandwidth);
  Eigen::MatrixXd all(2 * t, z.cols());
  all << z, z_star;
  g.k_q = rbf_gram(all, all, kernel_q.bandwidth);
  Eigen::MatrixXd reg = g.k_g;
  reg.diagonal().array() += static_cast<double>(t - 1) * mu;
  const auto llt = detail::checked_llt(reg, "build_grams");
  // E = K_g^T reg^{-1}; reg is symmetric so E^T = reg^{-1} K_g.
  g.e = llt.solve(g.k_g).transpose();
  return g;
}

/// beta = (K_g + T mu I)^{-1} v.
inline Eigen::VectorXd solve_beta(const GramPair& grams, const Eigen::VectorXd& v, double mu) {
  const auto t = grams.horizon();
  if (v.size() != t) throw ConfigError("solve_beta: residual length != T");
  Eigen::MatrixXd reg = grams.k_g;
  reg.diagonal().array() += static_cast<double>(t) * mu;
  const auto llt = detail::checked_llt(reg, "solve_beta");
  Eigen::VectorXd beta = llt.solve(v);
  if ((reg * beta - v).norm() > 1e-8 * std::max(1.0, v.norm()))
    throw NumericError("solve_beta: residual check failed");
  return beta;
}

namespace detail {

/// Rows of x at the given indices with exact duplicates removed.
inline Eigen::MatrixXd unique_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  std::vector<Eigen::Index> keep;
  for (auto i : idx) {
    bool dup = false;
    for (auto k : keep)
      if ((x.row(i) - x.row(k)).squaredNorm() == 0.0) {
        dup = true;
        break;
      }
    if (!dup) keep.push_back(i);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), x.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(keep[r]);
  return out;
}

inline std::vector<Eigen::Index> subsample(Eigen::Index n, std::size_t m, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (m < idx.size()) {
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

/// Solution of min_x ||F (r + B x)||^2 + x^T P x with P = blockdiag(pen, 0),
/// given FB and Fr. A relative jitter on the alpha block keeps the system
/// definite when the kernel matrix is numerically rank deficient.
struct CoupledSolution {
  Eigen::VectorXd x;
  Eigen::MatrixXd hessian;  // (FB)^T FB + P
  Eigen::VectorXd linear;   // (FB)^T F r
};

inline CoupledSolution solve_coupled(const Eigen::MatrixXd& fb, const Eigen::VectorXd& fr,
                                     const Eigen::MatrixXd& penalty) {
  const auto dim = fb.cols();
  CoupledSolution s;
  s.hessian = fb.transpose() * fb;
  s.hessian.topLeftCorner(dim - 1, dim - 1) += penalty;
  s.linear = fb.transpose() * fr;
  Eigen::MatrixXd h = s.hessian;
  const double jitter = 1e-11 * std::max(1e-300, h.diagonal().head(dim - 1).mean());
  h.diagonal().head(dim - 1).array() += jitter;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success) throw NumericError("solve_q: factorization failed");
  s.x = -ldlt.solve(s.linear);
  if (!s.x.allFinite()) throw NumericError("solve_q: non-finite solution");
  return s;
}

}  // namespace detail

/// Objective ||E (R + C K_Q alpha - eta 1)||^2 + T lambda alpha^T K_Q alpha
/// on the exact (uncapped) path.
inline double coupled_objective(const GramPair& g, const Eigen::VectorXd& reward,
                                const Eigen::VectorXd& alpha, double eta, double lambda) {
  const auto t = g.horizon();
  const Eigen::VectorXd q = g.k_q * alpha;
  const Eigen::VectorXd resid = reward + q.tail(t) - q.head(t) - Eigen::VectorXd::Constant(t, eta);
  return (g.e * resid).squaredNorm() + static_cast<double>(t) * lambda * alpha.dot(q);
}

/// Closed-form (alpha, eta) for one unit's Z/Z*/R arrays.
inline QModel solve_q(const Eigen::MatrixXd& z_raw, const Eigen::MatrixXd& z_star_raw,
                      const Eigen::VectorXd& reward, const QConfig& cfg) {
  const auto t = z_raw.rows();
  if (t < 2) throw ConfigError("solve_q: need T >= 2");
  if (!(cfg.mu > 0) || !(cfg.lambda > 0)) throw ConfigError("solve_q: mu and lambda must be positive");
  if (reward.size() != t || z_star_raw.rows() != t) throw ConfigError("solve_q: length mismatch");

  QModel m;
  m.mu = cfg.mu;
  m.lambda = cfg.lambda;
  Eigen::MatrixXd all_raw(2 * t, z_raw.cols());
  all_raw << z_raw, z_star_raw;
  m.input = Standardizer::fit(all_raw);
  const Eigen::MatrixXd all = m.input.apply(all_raw);
  const Eigen::MatrixXd z = all.topRows(t);
  const Eigen::MatrixXd z_star = all.bottomRows(t);
  const KernelSpec kg{cfg.bandwidth_g > 0 ? cfg.bandwidth_g : median_heuristic(z)};
  m.kernel = KernelSpec{cfg.bandwidth_q > 0 ? cfg.bandwidth_q : median_heuristic(all)};
  const double tl = static_cast<double>(t) * cfg.lambda;

  Eigen::MatrixXd fb;
  Eigen::VectorXd fr;
  Eigen::MatrixXd penalty;
  GramPair grams;
  const bool exact = static_cast<std::size_t>(t) <= cfg.center_cap;
  if (exact) {
    grams = build_grams(z, z_star, kg, m.kernel, cfg.mu);
    Eigen::MatrixXd b(t, 2 * t + 1);
    b.leftCols(2 * t) = grams.k_q.bottomRows(t) - grams.k_q.topRows(t);
    b.col(2 * t).setConstant(-1.0);
    fb = grams.e * b;
    fr = grams.e * reward;
    penalty = tl * grams.k_q;
    m.centers = all;
  } else {
    // Subsampled centers for Q and a Nystrom factor K_g ~ Phi Phi^T for the
    // smoother, so E = Phi (Phi^T Phi + (T-1) mu I)^{-1} Phi^T.
    const auto landmarks = detail::unique_rows(z, detail::subsample(t, cfg.center_cap, derive_seed(cfg.seed, {1})));
    Eigen::MatrixXd k_ll = rbf_gram(landmarks, landmarks, kg.bandwidth);
    k_ll.diagonal().array() += 1e-10 * k_ll.diagonal().mean();
    const Eigen::LLT<Eigen::MatrixXd> l_llt(k_ll);
    if (l_llt.info() != Eigen::Success) throw NumericError("solve_q: landmark Gram not definite");
    const Eigen::MatrixXd phi =
        l_llt.matrixL().solve(rbf_gram(landmarks, z, kg.bandwidth)).transpose();  // T x m
    Eigen::MatrixXd inner = phi.transpose() * phi;
    inner.diagonal().array() += static_cast<double>(t - 1) * cfg.mu;
    const auto inner_llt = detail::checked_llt(inner, "solve_q (reduced smoother)");

    m.centers = detail::unique_rows(all, detail::subsample(2 * t, cfg.center_cap, derive_seed(cfg.seed, {2})));
    const auto mc = m.centers.rows();
    Eigen::MatrixXd b(t, mc + 1);
    b.leftCols(mc) = rbf_gram(z_star, m.centers, m.kernel.bandwidth) - rbf_gram(z, m.centers, m.kernel.bandwidth);
    b.col(mc).setConstant(-1.0);
    // ||E y||^2 = ||S (Phi^T Phi + c I)^{-1} Phi^T y||^2 with S^T S = Phi^T Phi.
    const Eigen::MatrixXd gram_phi = phi.transpose() * phi;
    Eigen::LLT<Eigen::MatrixXd> s_llt(gram_phi + 1e-14 * gram_phi.diagonal().mean() *
                                                     Eigen::MatrixXd::Identity(gram_phi.rows(), gram_phi.cols()));
    const Eigen::MatrixXd s = s_llt.matrixU();
    fb = s * inner_llt.solve(phi.transpose() * b);
    fr = s * inner_llt.solve(phi.transpose() * reward);
    penalty = tl * rbf_gram(m.centers, m.centers, m.kernel.bandwidth);
  }

  const auto sol = detail::solve_coupled(fb, fr, penalty);
  const auto dim = sol.x.size();
  m.alpha = sol.x.head(dim - 1);
  m.value = sol.x(dim - 1);

  if (cfg.verify) {
    const Eigen::VectorXd grad = sol.hessian * sol.x + sol.linear;
    const double scale = sol.linear.norm() + sol.hessian.norm() * sol.x.norm();
    if (grad.norm() > 1e-6 * std::max(scale, 1e-300))
      throw NumericError("solve_q: stationarity check failed (gradient " + std::to_string(grad.norm()) +
                         ", scale " + std::to_string(scale) + ")");
    // The stationary point must be a minimum: probe random perturbations.
    auto objective = [&](const Eigen::VectorXd& x) {
      return (fr + fb * x).squaredNorm() + x.head(dim - 1).dot(penalty * x.head(dim - 1));
    };
    const double f0 = objective(sol.x);
    Rng rng(derive_seed(cfg.seed, {3}));
    std::normal_distribution<double> normal;
    for (int probe = 0; probe < 4; ++probe) {
      Eigen::VectorXd d(dim);
      for (auto& v : d) v = normal(rng);
      d *= 1e-3 * (1.0 + sol.x.norm()) / d.norm();
      if (objective(sol.x + d) < f0 - 1e-9 * std::max(1.0, std::abs(f0)))
        throw NumericError("solve_q: closed-form solution is not a minimizer (sign convention)");
    }
  }
  return m;
}

inline QModel solve_q(const UnitSample& sample, const QConfig& cfg) {
  return solve_q(sample.z, sample.z_star, sample.reward, cfg);
}

/// Grid search over (mu, lambda) by forward-chained validation: fit on the
/// first 80% of steps, score the mean squared temporal-difference residual
/// R + Q(Z*) - Q(Z) - eta on the remaining 20%.
inline QConfig select_regularizers(const UnitSample& sample, QConfig base, const std::vector<double>& mus,
                                   const std::vector<double>& lambdas) {
  const auto t = static_cast<Eigen::Index>(sample.horizon());
  const auto split = std::max<Eigen::Index>(2, (t * 4) / 5);
  if (t - split < 1) throw ConfigError("select_regularizers: horizon too short to hold out data");
  double best = std::numeric_limits<double>::infinity();
  QConfig chosen = base;
  for (double mu : mus) {
    for (double lambda : lambdas) {
      QConfig cfg = base;
      cfg.mu = mu;
      cfg.lambda = lambda;
      QModel m;
      try {
        m = solve_q(sample.z.topRows(split), sample.z_star.topRows(split), sample.reward.head(split), cfg);
      } catch (const NumericError&) {
        continue;
      }
      const Eigen::VectorXd resid = sample.reward.tail(t - split) +
                                    q_eval(m, Eigen::MatrixXd(sample.z_star.bottomRows(t - split))) -
                                    q_eval(m, Eigen::MatrixXd(sample.z.bottomRows(t - split))) -
                                    Eigen::VectorXd::Constant(t - split, m.value);
      const double score = resid.squaredNorm() / static_cast<double>(t - split);
      if (score < best) {
        best = score;
        chosen = cfg;
      }
    }
  }
  if (!std::isfinite(best)) throw NumericError("select_regularizers: every grid point failed");
  return chosen;
}

}  // namespace mfope
