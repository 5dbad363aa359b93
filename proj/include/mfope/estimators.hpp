#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/behavior.hpp"
#include "mfope/error.hpp"
#include "mfope/features.hpp"
#include "mfope/parallel.hpp"
#include "mfope/q_estimator.hpp"
#include "mfope/ratio.hpp"

namespace mfope {

enum class Method { IS, DR, DR_NS, DR_NM, QV, NAIVE };

inline constexpr std::array<Method, 6> kAllMethods = {Method::DR,    Method::IS, Method::DR_NS,
                                                      Method::DR_NM, Method::QV, Method::NAIVE};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::IS: return "IS";
    case Method::DR: return "DR";
    case Method::DR_NS: return "DR_NS";
    case Method::DR_NM: return "DR_NM";
    case Method::QV: return "QV";
    case Method::NAIVE: return "NAIVE";
  }
  return "?";
}

inline Method parse_method(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto m : kAllMethods)
    if (method_name(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

struct Diagnostics {
  double weight_mean = 0.0;
  double weight_max = 0.0;
  std::vector<double> effective_sample_size;  // per agent
  std::vector<std::string> warnings;
};

struct EstimateReport {
  Method method = Method::DR;
  std::vector<double> per_agent_values;
  double value = 0.0;
  Diagnostics diagnostics;
};

inline void to_json(nlohmann::json& j, const EstimateReport& r) {
  j = nlohmann::json{{"method", method_name(r.method)},
                     {"value", r.value},
                     {"per_agent_values", r.per_agent_values},
                     {"diagnostics",
                      {{"weight_mean", r.diagnostics.weight_mean},
                       {"weight_max", r.diagnostics.weight_max},
                       {"effective_sample_size", r.diagnostics.effective_sample_size},
                       {"warnings", r.diagnostics.warnings}}}};
}

/// Nuisance values for one unit evaluated along its trajectory.
struct UnitNuisance {
  Eigen::VectorXd omega;   // T: normalized ratio at S~_t
  Eigen::VectorXd q_now;   // T: Q(Z_t)
  Eigen::VectorXd q_next;  // T: Q(Z*_t)
  double value = 0.0;      // plug-in V_i
};

inline UnitNuisance evaluate_nuisance(const UnitSample& s, const RatioModel* ratio, const QModel* q) {
  const auto t = static_cast<Eigen::Index>(s.horizon());
  UnitNuisance n;
  n.omega = ratio ? (*ratio)(Eigen::MatrixXd(s.tilde.topRows(t))) : Eigen::VectorXd::Ones(t);
  if (q) {
    n.q_now = q_eval(*q, s.z);
    n.q_next = q_eval(*q, s.z_star);
    n.value = q->value;
  } else {
    n.q_now = Eigen::VectorXd::Zero(t);
    n.q_next = Eigen::VectorXd::Zero(t);
  }
  return n;
}

/// T^{-1} sum_t omega_t 1_t / b_t R_t.
inline double is_agent(const UnitSample& s, const Eigen::VectorXd& omega) {
  return omega.cwiseProduct(s.weight()).dot(s.reward) / static_cast<double>(s.horizon());
}

/// V_i + T^{-1} sum_t omega_t 1_t / b_t (R_t + Q(Z*_t) - Q(Z_t) - V_i).
inline double dr_agent(const UnitSample& s, const UnitNuisance& n) {
  const auto t = static_cast<Eigen::Index>(s.horizon());
  const Eigen::VectorXd resid = s.reward + n.q_next - n.q_now - Eigen::VectorXd::Constant(t, n.value);
  return n.value + n.omega.cwiseProduct(s.weight()).dot(resid) / static_cast<double>(t);
}

namespace detail {

inline void finish(EstimateReport& r) {
  double sum = 0.0;
  for (double v : r.per_agent_values) sum += v;
  r.value = r.per_agent_values.empty() ? 0.0 : sum / static_cast<double>(r.per_agent_values.size());
}

inline void add_weight_diagnostics(EstimateReport& r, const std::vector<UnitSample>& samples,
                                   const std::vector<Eigen::VectorXd>& omegas) {
  double total = 0.0, count = 0.0, wmax = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::VectorXd w = omegas[i].cwiseProduct(samples[i].weight());
    total += w.sum();
    count += static_cast<double>(w.size());
    wmax = std::max(wmax, w.maxCoeff());
    const double sq = w.squaredNorm();
    r.diagnostics.effective_sample_size.push_back(sq > 0 ? w.sum() * w.sum() / sq : 0.0);
    if (samples[i].indicator.sum() <= 0.0)
      r.diagnostics.warnings.push_back("unit " + std::to_string(samples[i].unit) +
                                       ": target event never observed; weighted term is zero");
  }
  r.diagnostics.weight_mean = count > 0 ? total / count : 0.0;
  r.diagnostics.weight_max = wmax;
}

}  // namespace detail

inline EstimateReport is_value(const std::vector<UnitSample>& samples,
                               const std::vector<UnitNuisance>& nuisance) {
  EstimateReport r;
  r.method = Method::IS;
  std::vector<Eigen::VectorXd> omegas;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r.per_agent_values.push_back(is_agent(samples[i], nuisance[i].omega));
    omegas.push_back(nuisance[i].omega);
  }
  detail::add_weight_diagnostics(r, samples, omegas);
  detail::finish(r);
  return r;
}

inline EstimateReport dr_value(const std::vector<UnitSample>& samples,
                               const std::vector<UnitNuisance>& nuisance, Method tag = Method::DR) {
  EstimateReport r;
  r.method = tag;
  std::vector<Eigen::VectorXd> omegas;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r.per_agent_values.push_back(dr_agent(samples[i], nuisance[i]));
    omegas.push_back(nuisance[i].omega);
  }
  detail::add_weight_diagnostics(r, samples, omegas);
  detail::finish(r);
  return r;
}

/// N^{-1} sum_i eta_i.
inline EstimateReport qv_value(const std::vector<QModel>& qs) {
  EstimateReport r;
  r.method = Method::QV;
  for (const auto& q : qs) r.per_agent_values.push_back(q.value);
  detail::finish(r);
  return r;
}

inline EstimateReport qv_value(const std::vector<UnitNuisance>& nuisance) {
  EstimateReport r;
  r.method = Method::QV;
  for (const auto& n : nuisance) r.per_agent_values.push_back(n.value);
  detail::finish(r);
  return r;
}

/// (NT)^{-1} sum R; per-agent values are each unit's own time average.
inline EstimateReport naive_average(const Trajectory& traj) {
  EstimateReport r;
  r.method = Method::NAIVE;
  for (Eigen::Index i = 0; i < traj.rewards.rows(); ++i) r.per_agent_values.push_back(traj.rewards.row(i).mean());
  detail::finish(r);
  return r;
}

// ---------------------------------------------------------------------------
// Fitting pipeline

struct EstimatorConfig {
  RatioConfig ratio;
  QConfig q;
  double b_min = kDefaultBMin;
  double behavior_p = 0.5;
  bool estimate_behavior = false;
  std::size_t workers = 1;  // parallel units
};

inline void to_json(nlohmann::json& j, const EstimatorConfig& c) {
  j = nlohmann::json{{"ratio", c.ratio},
                     {"q", c.q},
                     {"b_min", c.b_min},
                     {"behavior_p", c.behavior_p},
                     {"estimate_behavior", c.estimate_behavior}};
}

inline EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
  EstimatorConfig c;
  if (j.contains("ratio")) c.ratio = ratio_config_from_json(j.at("ratio"));
  if (j.contains("q")) c.q = q_config_from_json(j.at("q"));
  c.b_min = j.value("b_min", c.b_min);
  c.behavior_p = j.value("behavior_p", c.behavior_p);
  c.estimate_behavior = j.value("estimate_behavior", c.estimate_behavior);
  if (!(c.b_min > 0 && c.b_min < 1)) throw ConfigError("estimator: b_min must lie in (0,1)");
  return c;
}

/// Fitted nuisances for every unit under one view.
struct ViewFit {
  std::vector<UnitSample> samples;
  std::vector<std::optional<RatioModel>> ratios;
  std::vector<std::optional<QModel>> qs;
  std::vector<UnitNuisance> nuisance;
  std::vector<std::string> warnings;
};

/// Builds samples for `view` and fits the requested nuisances per unit.
/// Units whose target event never occurs get no ratio model (their weighted
/// terms are identically zero) and a warning.
inline ViewFit fit_view(FeatureView view, const Trajectory& traj, const std::vector<ActionVector>& target,
                        const BehaviorModel& behavior, const EstimatorConfig& cfg, bool need_ratio,
                        bool need_q, std::uint64_t seed) {
  ViewFit fit;
  fit.samples = make_samples(view, traj, target, behavior);
  const auto n = fit.samples.size();
  fit.ratios.resize(n);
  fit.qs.resize(n);
  fit.nuisance.resize(n);
  std::vector<std::string> notes(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const auto& s = fit.samples[i];
    if (need_ratio) {
      if (s.indicator.sum() > 0.0) {
        RatioConfig rc = cfg.ratio;
        rc.joint_units = n;
        fit.ratios[i] = fit_ratio(s, rc, derive_seed(seed, {static_cast<std::uint64_t>(view), i, 0}));
      } else {
        notes[i] = "unit " + std::to_string(i) + ": no matched steps, ratio not fitted";
      }
    }
    if (need_q) {
      QConfig qc = cfg.q;
      qc.seed = derive_seed(seed, {static_cast<std::uint64_t>(view), i, 1});
      fit.qs[i] = solve_q(s, qc);
    }
    fit.nuisance[i] = evaluate_nuisance(s, fit.ratios[i] ? &*fit.ratios[i] : nullptr,
                                        fit.qs[i] ? &*fit.qs[i] : nullptr);
  });
  for (auto& note : notes)
    if (!note.empty()) fit.warnings.push_back(std::move(note));
  return fit;
}

/// Runs the requested estimators on one behavior trajectory for one target.
inline std::map<Method, EstimateReport> evaluate_target(const Trajectory& traj,
                                                        const std::vector<ActionVector>& target,
                                                        const std::set<Method>& methods,
                                                        const EstimatorConfig& cfg, std::uint64_t seed) {
  std::map<Method, EstimateReport> out;
  const auto exact = BehaviorModel::exact(cfg.behavior_p, cfg.b_min);
  auto has = [&](Method m) { return methods.count(m) > 0; };

  if (has(Method::DR) || has(Method::IS) || has(Method::QV)) {
    const auto behavior = cfg.estimate_behavior ? estimate_behavior(traj, target, 1.0, cfg.b_min) : exact;
    const bool need_ratio = has(Method::DR) || has(Method::IS);
    const bool need_q = has(Method::DR) || has(Method::QV);
    auto fit = fit_view(FeatureView::mean_field, traj, target, behavior, cfg, need_ratio, need_q, seed);
    auto tag = [&](EstimateReport r) {
      for (const auto& w : fit.warnings) r.diagnostics.warnings.push_back(w);
      return r;
    };
    if (has(Method::DR)) out[Method::DR] = tag(dr_value(fit.samples, fit.nuisance));
    if (has(Method::IS)) out[Method::IS] = tag(is_value(fit.samples, fit.nuisance));
    if (has(Method::QV)) out[Method::QV] = qv_value(fit.nuisance);
  }
  if (has(Method::DR_NS)) {
    auto fit = fit_view(FeatureView::no_spatial, traj, target, exact, cfg, true, true, seed);
    auto r = dr_value(fit.samples, fit.nuisance, Method::DR_NS);
    for (const auto& w : fit.warnings) r.diagnostics.warnings.push_back(w);
    out[Method::DR_NS] = std::move(r);
  }
  if (has(Method::DR_NM)) {
    auto fit = fit_view(FeatureView::joint, traj, target, exact, cfg, true, true, seed);
    auto r = dr_value(fit.samples, fit.nuisance, Method::DR_NM);
    for (const auto& w : fit.warnings) r.diagnostics.warnings.push_back(w);
    out[Method::DR_NM] = std::move(r);
  }
  if (has(Method::NAIVE)) out[Method::NAIVE] = naive_average(traj);
  return out;
}

}  // namespace mfope
