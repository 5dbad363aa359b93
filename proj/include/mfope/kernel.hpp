#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"

namespace mfope {

/// Gaussian RBF kernel. A non-positive bandwidth means "resolve by the
/// median heuristic" and must be resolved before evaluation.
struct KernelSpec {
  double bandwidth = 0.0;

  bool resolved() const { return bandwidth > 0.0; }
};

inline void to_json(nlohmann::json& j, const KernelSpec& k) {
  j = nlohmann::json{{"family", "rbf"}, {"bandwidth", k.bandwidth}};
}

inline double rbf_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& y, double bandwidth) {
  if (x.size() != y.size()) throw ConfigError("rbf_kernel: dimension mismatch");
  if (!(bandwidth > 0.0)) throw ConfigError("rbf_kernel: bandwidth must be positive");
  return std::exp(-(x - y).squaredNorm() / (2.0 * bandwidth * bandwidth));
}

/// Pairwise squared distances between the rows of a and b.
inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ConfigError("squared_distances: dimension mismatch");
  const Eigen::VectorXd an = a.rowwise().squaredNorm();
  const Eigen::VectorXd bn = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * a * b.transpose();
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

inline Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ConfigError("rbf_gram: bandwidth must be positive");
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  return (squared_distances(a, b) * scale).array().exp().matrix();
}

/// Median of the nonzero pairwise distances between rows (at most `cap`
/// rows, evenly strided). Falls back to 1 when every row coincides.
inline double median_heuristic(const Eigen::MatrixXd& x, Eigen::Index cap = 1000) {
  const Eigen::Index n = x.rows();
  const Eigen::Index stride = std::max<Eigen::Index>(1, (n + cap - 1) / cap);
  std::vector<double> d;
  for (Eigen::Index i = 0; i < n; i += stride)
    for (Eigen::Index j = i + stride; j < n; j += stride) {
      const double v = (x.row(i) - x.row(j)).norm();
      if (v > 1e-12) d.push_back(v);
    }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

/// Per-coordinate affine standardization (mean 0, sd 1). Coordinates with
/// zero spread are centered only.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    const double n = static_cast<double>(std::max<Eigen::Index>(1, x.rows()));
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().sum() / n).sqrt();
    for (Eigen::Index c = 0; c < s.scale.size(); ++c)
      if (!(s.scale(c) > 1e-12)) s.scale(c) = 1.0;
    return s;
  }

  static Standardizer identity(Eigen::Index dim) {
    return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return (x - mean.transpose()).cwiseQuotient(scale.transpose());
  }
};

inline void to_json(nlohmann::json& j, const Standardizer& s) {
  j = nlohmann::json{{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
                     {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

}  // namespace mfope
