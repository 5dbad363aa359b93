#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mfope/behavior.hpp"
#include "mfope/simulator.hpp"
#include "mfope/topology.hpp"

namespace mfope {

/// Which conditioning set the nuisance models see.
///
///  - mean_field: own variables plus neighbor averages (the proposed estimators);
///  - no_spatial: own action and state only, neighbors ignored;
///  - joint: own variables plus the full concatenation of every other unit,
///    so the match event is A_t = pi(S_t) for the whole system.
enum class FeatureView { mean_field, no_spatial, joint };

/// Everything an estimator needs about one unit, as dense arrays.
struct UnitSample {
  std::size_t unit = 0;
  Eigen::MatrixXd tilde;       // (T+1) x d: ratio input at t = 0..T
  Eigen::MatrixXd z;           // T x p: Q input at (A_t, S_t)
  Eigen::MatrixXd z_star;      // T x p: Q input at (pi(S_{t+1}), S_{t+1})
  Eigen::VectorXd indicator;   // T: 1 when the observed actions match the target event
  Eigen::VectorXd propensity;  // T: behavior probability of that event
  Eigen::VectorXd reward;      // T

  std::size_t horizon() const { return static_cast<std::size_t>(reward.size()); }

  /// indicator / propensity.
  Eigen::VectorXd weight() const { return indicator.cwiseQuotient(propensity); }
};

namespace detail {

inline void fill_joint_row(Eigen::Ref<Eigen::VectorXd> out, const GlobalState& s,
                           std::span<const int> a, std::size_t i, bool with_own_action) {
  const auto n = static_cast<Eigen::Index>(s.rows());
  const auto d = s.cols();
  Eigen::Index k = 0;
  if (with_own_action) out(k++) = a[i];
  for (Eigen::Index j = 0; j < n; ++j)
    if (static_cast<std::size_t>(j) != i) out(k++) = a[static_cast<std::size_t>(j)];
  out.segment(k, d) = s.row(static_cast<Eigen::Index>(i)).transpose();
  k += d;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (static_cast<std::size_t>(j) == i) continue;
    out.segment(k, d) = s.row(j).transpose();
    k += d;
  }
}

}  // namespace detail

/// Builds the per-unit arrays for one view. `target` holds pi(S_t) for
/// t = 0..T (see `policy_actions`).
inline UnitSample make_unit_sample(FeatureView view, const Trajectory& traj,
                                   const std::vector<ActionVector>& target, std::size_t unit,
                                   const BehaviorModel& behavior) {
  const auto& g = traj.graph;
  const auto horizon = traj.horizon();
  if (target.size() != horizon + 1) throw ConfigError("unit sample: need pi(S_t) for t = 0..T");
  if (unit >= g.n_units()) throw std::out_of_range("unit sample: unit index");
  const auto n = static_cast<Eigen::Index>(g.n_units());
  const auto d = traj.states.front().cols();
  const auto T = static_cast<Eigen::Index>(horizon);
  const auto ui = static_cast<Eigen::Index>(unit);

  UnitSample out;
  out.unit = unit;
  out.reward = traj.rewards.row(ui).transpose();
  out.indicator.resize(T);
  out.propensity.resize(T);

  switch (view) {
    case FeatureView::mean_field: {
      out.tilde.resize(T + 1, 1 + 2 * d);
      out.z.resize(T, 2 + 2 * d);
      out.z_star.resize(T, 2 + 2 * d);
      for (Eigen::Index t = 0; t <= T; ++t)
        out.tilde.row(t) = tilde_state(g, traj.states[t], target[t], unit).flatten().transpose();
      const int deg = static_cast<int>(g.degree(unit));
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto& a = traj.actions[t];
        out.z.row(t) = local_input(g, traj.states[t], a, unit).transpose();
        out.z_star.row(t) = local_input(g, traj.states[t + 1], target[t + 1], unit).transpose();
        const int k_obs = neighbor_action_count(g, a, unit);
        const int k_tgt = neighbor_action_count(g, target[t], unit);
        out.indicator(t) = (a[unit] == target[t][unit] && k_obs == k_tgt) ? 1.0 : 0.0;
        double b;
        if (behavior.is_exact()) {
          b = match_probability<double>(deg, target[t][unit], k_tgt, behavior.p, g.include_self());
        } else {
          b = behavior.fitted.at(unit).predict(out.tilde.row(t).transpose());
        }
        out.propensity(t) = std::max(b, behavior.b_min);
      }
      break;
    }
    case FeatureView::no_spatial: {
      out.tilde.resize(T + 1, d);
      out.z.resize(T, 1 + d);
      out.z_star.resize(T, 1 + d);
      for (Eigen::Index t = 0; t <= T; ++t) out.tilde.row(t) = traj.states[t].row(ui);
      double freq = 0.0;
      if (!behavior.is_exact()) {
        for (Eigen::Index t = 0; t < T; ++t) freq += traj.actions[t][unit];
        freq /= static_cast<double>(T);
      }
      for (Eigen::Index t = 0; t < T; ++t) {
        const int a = traj.actions[t][unit];
        out.z(t, 0) = a;
        out.z.row(t).tail(d) = traj.states[t].row(ui);
        out.z_star(t, 0) = target[t + 1][unit];
        out.z_star.row(t).tail(d) = traj.states[t + 1].row(ui);
        const int pi = target[t][unit];
        out.indicator(t) = a == pi ? 1.0 : 0.0;
        const double p = behavior.is_exact() ? behavior.p : freq;
        out.propensity(t) = std::max(pi == 1 ? p : 1.0 - p, behavior.b_min);
      }
      break;
    }
    case FeatureView::joint: {
      if (!behavior.is_exact()) throw ConfigError("joint view requires the exact behavior policy");
      out.tilde.resize(T + 1, (n - 1) + n * d);
      out.z.resize(T, n + n * d);
      out.z_star.resize(T, n + n * d);
      for (Eigen::Index t = 0; t <= T; ++t) {
        Eigen::VectorXd row(out.tilde.cols());
        detail::fill_joint_row(row, traj.states[t], target[t], unit, false);
        out.tilde.row(t) = row.transpose();
      }
      Eigen::VectorXd row(out.z.cols());
      for (Eigen::Index t = 0; t < T; ++t) {
        detail::fill_joint_row(row, traj.states[t], traj.actions[t], unit, true);
        out.z.row(t) = row.transpose();
        detail::fill_joint_row(row, traj.states[t + 1], target[t + 1], unit, true);
        out.z_star.row(t) = row.transpose();
        out.indicator(t) = traj.actions[t] == target[t] ? 1.0 : 0.0;
        // Not floored: 0.5^N is the quantity the full-space estimator divides by.
        out.propensity(t) = exact_b_joint(target[t], behavior.p);
      }
      break;
    }
  }
  return out;
}

inline std::vector<UnitSample> make_samples(FeatureView view, const Trajectory& traj,
                                            const std::vector<ActionVector>& target,
                                            const BehaviorModel& behavior) {
  std::vector<UnitSample> out;
  out.reserve(traj.n_units());
  for (std::size_t i = 0; i < traj.n_units(); ++i)
    out.push_back(make_unit_sample(view, traj, target, i, behavior));
  return out;
}

/// Fits one logistic b_i model per unit on (tilde S_{i,t}, match indicator).
inline BehaviorModel estimate_behavior(const Trajectory& traj, const std::vector<ActionVector>& target,
                                       double ridge = 1.0, double b_min = kDefaultBMin) {
  BehaviorModel model;
  model.b_min = b_min;
  const auto probe = BehaviorModel::exact(0.5, b_min);
  for (std::size_t i = 0; i < traj.n_units(); ++i) {
    const auto s = make_unit_sample(FeatureView::mean_field, traj, target, i, probe);
    model.fitted.push_back(
        LogisticBehavior::fit(s.tilde.topRows(s.z.rows()), s.indicator, ridge, b_min));
  }
  return model;
}

}  // namespace mfope
