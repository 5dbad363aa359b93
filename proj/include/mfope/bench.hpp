#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"
#include "mfope/estimators.hpp"
#include "mfope/ground_truth.hpp"
#include "mfope/parallel.hpp"
#include "mfope/rng.hpp"
#include "mfope/simulator.hpp"
#include "mfope/stats.hpp"

namespace mfope {

inline constexpr const char* kVersion = "0.1.0";

struct BenchConfig {
  EnvConfig env;
  std::vector<double> sigma_r = {15.0};
  std::vector<std::size_t> horizons = {336};
  std::vector<std::size_t> ks = {6, 7, 8, 9};
  std::size_t n_replications = 100;
  std::vector<Method> methods = {kAllMethods.begin(), kAllMethods.end()};
  EstimatorConfig estimator;
  TruthConfig truth;
  std::string out_dir = "bench_out";
  std::uint64_t master_seed = 20240101;
  std::size_t workers = 1;
  double max_failure_fraction = 0.10;

  /// Empty `methods` is allowed here; it produces a manifest-only run.
  void validate() const {
    env.validate();
    if (sigma_r.empty() || horizons.empty() || ks.empty()) throw ConfigError("bench: sweep lists must be nonempty");
    for (double s : sigma_r)
      if (!(s >= 0)) throw ConfigError("bench: sigma_r values must be >= 0");
    for (auto t : horizons)
      if (t < 2) throw ConfigError("bench: T values must be >= 2");
    const auto n = env.graph().n_units();
    for (auto k : ks)
      if (k > n) throw ConfigError("bench: K exceeds the number of units");
    if (n_replications < 2) throw ConfigError("bench: n_replications must be >= 2");
    if (workers < 1) throw ConfigError("bench: workers must be >= 1");
    if (truth.horizon <= truth.burn_in || truth.n_rollouts < 1) throw ConfigError("bench: invalid truth settings");
    if (!(estimator.behavior_p > 0 && estimator.behavior_p < 1)) throw ConfigError("bench: behavior_p must lie in (0,1)");
  }
};

inline void to_json(nlohmann::json& j, const BenchConfig& c) {
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.push_back(method_name(m));
  j = nlohmann::json{{"env", c.env},
                     {"sweep", {{"sigma_r", c.sigma_r}, {"T", c.horizons}, {"K", c.ks}}},
                     {"n_replications", c.n_replications},
                     {"methods", methods},
                     {"estimator", c.estimator},
                     {"truth", c.truth},
                     {"out_dir", c.out_dir},
                     {"master_seed", c.master_seed},
                     {"workers", c.workers},
                     {"max_failure_fraction", c.max_failure_fraction}};
}

inline BenchConfig bench_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"env",     "sweep",      "n_replications", "methods",
                                              "estimator", "truth",    "out_dir",        "master_seed",
                                              "workers", "max_failure_fraction"};
  if (!j.is_object()) throw ConfigError("bench config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("bench config: unknown key '" + key + "'");
  BenchConfig c;
  try {
    if (j.contains("env")) c.env = env_config_from_json(j.at("env"));
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      c.sigma_r = s.value("sigma_r", c.sigma_r);
      c.horizons = s.value("T", c.horizons);
      c.ks = s.value("K", c.ks);
    }
    c.n_replications = j.value("n_replications", c.n_replications);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) {
        const auto parsed = parse_method(m.get<std::string>());
        if (std::find(c.methods.begin(), c.methods.end(), parsed) == c.methods.end()) c.methods.push_back(parsed);
      }
    }
    if (j.contains("estimator")) c.estimator = estimator_config_from_json(j.at("estimator"));
    if (j.contains("truth")) c.truth = truth_config_from_json(j.at("truth"));
    c.out_dir = j.value("out_dir", c.out_dir);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.workers = j.value("workers", c.workers);
    c.max_failure_fraction = j.value("max_failure_fraction", c.max_failure_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bench config: ") + e.what());
  }
  c.validate();
  return c;
}

inline BenchConfig load_bench_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return bench_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Results

struct BenchRow {
  Method method = Method::DR;
  std::size_t k = 0;
  double sigma_r = 0.0;
  std::size_t horizon = 0;
  std::size_t replication = 0;
  double estimate = 0.0;
  double truth = 0.0;
  double squared_error = 0.0;

  bool operator==(const BenchRow&) const = default;
};

struct CellKey {
  Method method;
  std::size_t k;
  double sigma_r;
  std::size_t horizon;
  auto tie() const { return std::tuple(sigma_r, horizon, k, static_cast<int>(method)); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
};

struct CellSummary {
  CellKey cell;
  std::size_t n = 0;
  std::size_t n_failed = 0;
  double mse = 0.0;
  double se = 0.0;
};

struct TTestRow {
  Method a;
  Method b;
  std::size_t k;
  double sigma_r;
  std::size_t horizon;
  TTestResult result;
};

struct FailureRecord {
  std::size_t k;
  double sigma_r;
  std::size_t horizon;
  std::size_t replication;
  std::string message;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<CellSummary> summary;
  std::vector<TTestRow> ttests;
  std::vector<FailureRecord> failures;
  std::vector<std::string> failed_cells;  // over the failure threshold
  bool ok() const { return failed_cells.empty(); }
};

/// Seed of one replication job; shared by every K of that (sigma_r, T) cell.
inline std::uint64_t replication_seed(std::uint64_t master, std::size_t rep, double sigma_r, std::size_t horizon) {
  return derive_seed(master, {rep, std::bit_cast<std::uint64_t>(sigma_r), horizon});
}

struct ReplicationOutput {
  // per K index: method -> estimate, truth, or error message
  std::vector<std::map<Method, double>> estimates;
  std::vector<double> truths;
  std::vector<std::string> errors;
};

/// One replication: fresh mu, one behavior trajectory, then truth and
/// estimates for every K.
inline ReplicationOutput run_replication(const BenchConfig& cfg, double sigma_r, std::size_t horizon,
                                         std::size_t rep) {
  ReplicationOutput out;
  out.estimates.resize(cfg.ks.size());
  out.truths.assign(cfg.ks.size(), 0.0);
  out.errors.resize(cfg.ks.size());

  const auto seed = replication_seed(cfg.master_seed, rep, sigma_r, horizon);
  EnvConfig env_cfg = cfg.env;
  env_cfg.sigma_r = sigma_r;
  env_cfg.horizon = horizon;
  env_cfg.seed = seed;

  Trajectory traj;
  std::vector<double> mu;
  try {
    Environment env(env_cfg);
    mu = env.mu();
    traj = rollout(env, Policy::behavior_bernoulli(cfg.estimator.behavior_p), horizon);
  } catch (const std::exception& e) {
    for (auto& err : out.errors) err = std::string("behavior rollout: ") + e.what();
    return out;
  }

  const std::set<Method> methods(cfg.methods.begin(), cfg.methods.end());
  EstimatorConfig est = cfg.estimator;
  est.workers = 1;
  for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki) {
    try {
      const auto k = cfg.ks[ki];
      const auto policy = Policy::top_k(mu, k);
      out.truths[ki] = mc_true_value(env_cfg, mu, policy, cfg.truth, derive_seed(seed, {k, 1})).value;
      const auto target = policy_actions(policy, traj);
      const auto reports = evaluate_target(traj, target, methods, est, derive_seed(seed, {k, 2}));
      for (const auto& [m, r] : reports) {
        if (!std::isfinite(r.value)) throw NumericError(method_name(m) + " produced a non-finite estimate");
        out.estimates[ki][m] = r.value;
      }
    } catch (const std::exception& e) {
      out.errors[ki] = e.what();
      out.estimates[ki].clear();
    }
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Runs every (sigma_r, T, replication) job on `cfg.workers` threads and
/// reduces the outputs in a fixed order, so the result does not depend on
/// the worker count.
inline BenchResult run_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  BenchResult result;
  if (cfg.methods.empty()) return result;

  struct Job {
    std::size_t si, ti, rep;
  };
  std::vector<Job> jobs;
  for (std::size_t si = 0; si < cfg.sigma_r.size(); ++si)
    for (std::size_t ti = 0; ti < cfg.horizons.size(); ++ti)
      for (std::size_t rep = 0; rep < cfg.n_replications; ++rep) jobs.push_back({si, ti, rep});

  std::vector<ReplicationOutput> outputs(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
    outputs[j] = run_replication(cfg, cfg.sigma_r[jobs[j].si], cfg.horizons[jobs[j].ti], jobs[j].rep);
  });

  auto job_index = [&](std::size_t si, std::size_t ti, std::size_t rep) {
    return (si * cfg.horizons.size() + ti) * cfg.n_replications + rep;
  };

  for (std::size_t si = 0; si < cfg.sigma_r.size(); ++si) {
    for (std::size_t ti = 0; ti < cfg.horizons.size(); ++ti) {
      const double sigma = cfg.sigma_r[si];
      const auto horizon = cfg.horizons[ti];
      for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki) {
        const auto k = cfg.ks[ki];
        std::size_t n_failed = 0;
        for (std::size_t rep = 0; rep < cfg.n_replications; ++rep) {
          const auto& o = outputs[job_index(si, ti, rep)];
          if (!o.errors[ki].empty()) {
            ++n_failed;
            result.failures.push_back({k, sigma, horizon, rep, o.errors[ki]});
          }
        }
        std::map<Method, std::vector<double>> squared;
        for (auto m : cfg.methods) {
          for (std::size_t rep = 0; rep < cfg.n_replications; ++rep) {
            const auto& o = outputs[job_index(si, ti, rep)];
            if (!o.errors[ki].empty()) continue;
            const double est = o.estimates[ki].at(m);
            const double truth = o.truths[ki];
            const double se = (est - truth) * (est - truth);
            result.rows.push_back({m, k, sigma, horizon, rep, est, truth, se});
            squared[m].push_back(se);
          }
          CellSummary cs{{m, k, sigma, horizon}, squared[m].size(), n_failed, 0.0, 0.0};
          if (squared[m].size() >= 2) {
            const auto r = mse_of_squared(squared[m]);
            cs.mse = r.mse;
            cs.se = r.se;
          } else {
            cs.mse = cs.se = std::nan("");
          }
          result.summary.push_back(cs);
        }
        const bool has_dr = squared.count(Method::DR) > 0;
        for (auto m : cfg.methods) {
          if (!has_dr || m == Method::DR || squared[m].size() < 2) continue;
          result.ttests.push_back({Method::DR, m, k, sigma, horizon, paired_t_test(squared[Method::DR], squared[m])});
        }
        if (static_cast<double>(n_failed) > cfg.max_failure_fraction * static_cast<double>(cfg.n_replications)) {
          result.failed_cells.push_back("K=" + std::to_string(k) + " sigma_r=" + format_double(sigma) +
                                        " T=" + std::to_string(horizon) + ": " + std::to_string(n_failed) + "/" +
                                        std::to_string(cfg.n_replications) + " replications failed");
        }
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output

inline const char* kResultsHeader = "method,K,sigma_r,T,replication,estimate,truth,squared_error";

inline void write_results_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << kResultsHeader << '\n';
  for (const auto& r : rows)
    os << method_name(r.method) << ',' << r.k << ',' << format_double(r.sigma_r) << ',' << r.horizon << ','
       << r.replication << ',' << format_double(r.estimate) << ',' << format_double(r.truth) << ','
       << format_double(r.squared_error) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<BenchRow> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw DataError("results.csv: unexpected header");
  std::vector<BenchRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError("results.csv line " + std::to_string(line_no) + ": expected 8 fields");
    try {
      rows.push_back({parse_method(f[0]), std::stoul(f[1]), std::stod(f[2]), std::stoul(f[3]), std::stoul(f[4]),
                      std::stod(f[5]), std::stod(f[6]), std::stod(f[7])});
    } catch (const std::logic_error& e) {
      throw DataError("results.csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

inline void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& summary) {
  os << "method,K,sigma_r,T,n,n_failed,mse,se\n";
  for (const auto& s : summary)
    os << method_name(s.cell.method) << ',' << s.cell.k << ',' << format_double(s.cell.sigma_r) << ','
       << s.cell.horizon << ',' << s.n << ',' << s.n_failed << ',' << format_double(s.mse) << ','
       << format_double(s.se) << '\n';
}

inline void write_ttests_csv(std::ostream& os, const std::vector<TTestRow>& tests) {
  os << "method_a,method_b,K,sigma_r,T,n,t_stat,p_value,degenerate\n";
  for (const auto& t : tests)
    os << method_name(t.a) << ',' << method_name(t.b) << ',' << t.k << ',' << format_double(t.sigma_r) << ','
       << t.horizon << ',' << t.result.n << ',' << format_double(t.result.t_stat) << ','
       << format_double(t.result.p_value) << ',' << (t.result.degenerate ? 1 : 0) << '\n';
}

/// Squared errors of `m` in one cell, ordered by replication.
inline std::vector<double> cell_errors(const std::vector<BenchRow>& rows, Method m, std::size_t k, double sigma_r,
                                       std::size_t horizon) {
  std::vector<std::pair<std::size_t, double>> v;
  for (const auto& r : rows)
    if (r.method == m && r.k == k && r.sigma_r == sigma_r && r.horizon == horizon)
      v.emplace_back(r.replication, r.squared_error);
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (const auto& p : v) out.push_back(p.second);
  return out;
}

namespace detail {

/// Minimal line chart: log10 y axis, one polyline per series.
inline std::string svg_line_plot(const std::string& title, const std::string& x_label,
                                 const std::vector<double>& xs,
                                 const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 130, Tm = 40, B = 50;
  const char* colors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};
  double ymin = INFINITY, ymax = -INFINITY;
  for (const auto& [_, ys] : series)
    for (double y : ys)
      if (y > 0 && std::isfinite(y)) {
        ymin = std::min(ymin, std::log10(y));
        ymax = std::max(ymax, std::log10(y));
      }
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  ymin = std::floor(ymin);
  ymax = std::max(std::ceil(ymax), ymin + 1);
  const double xmin = *std::min_element(xs.begin(), xs.end());
  const double xmax = std::max(*std::max_element(xs.begin(), xs.end()), xmin + 1e-12);
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double ly) { return H - B - (ly - ymin) / (ymax - ymin) * (H - Tm - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double x : xs)
    os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << x << "</text>\n";
  for (double e = ymin; e <= ymax; e += 1)
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(e) + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << x_label
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << (Tm + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (Tm + H - B) / 2
     << ")\" text-anchor=\"middle\">MSE (log scale)</text>\n";
  std::size_t c = 0;
  for (const auto& [name, ys] : series) {
    const char* color = colors[c % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (ys[i] > 0 && std::isfinite(ys[i])) os << px(xs[i]) << ',' << py(std::log10(ys[i])) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (ys[i] > 0 && std::isfinite(ys[i]))
        os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(std::log10(ys[i])) << "\" r=\"3\" fill=\"" << color
           << "\"/>\n";
    os << "<text x=\"" << W - R + 12 << "\" y=\"" << Tm + 16 * c + 10 << "\" fill=\"" << color << "\">" << name
       << "</text>\n";
    ++c;
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace detail

/// Writes results.csv, summary.csv, ttests.csv, run_manifest.json and SVG
/// plots into `dir`. With no methods configured only the manifest is written
/// and false is returned.
inline bool emit_outputs(const BenchConfig& cfg, const BenchResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest = {
      {"config", cfg},
      {"master_seed", cfg.master_seed},
      {"versions",
       {{"mfope", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION},
        {"compiler", __VERSION__}}},
      {"n_rows", result.rows.size()},
      {"n_failures", result.failures.size()},
      {"failed_cells", result.failed_cells}};
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : result.failures)
    failures.push_back({{"K", f.k}, {"sigma_r", f.sigma_r}, {"T", f.horizon}, {"replication", f.replication},
                        {"message", f.message}});
  manifest["failures"] = failures;
  detail::write_file(dir / "run_manifest.json", manifest.dump(2) + "\n");
  if (cfg.methods.empty()) return false;

  {
    std::ostringstream os;
    write_results_csv(os, result.rows);
    detail::write_file(dir / "results.csv", os.str());
  }
  {
    std::ostringstream os;
    write_summary_csv(os, result.summary);
    detail::write_file(dir / "summary.csv", os.str());
  }
  {
    std::ostringstream os;
    write_ttests_csv(os, result.ttests);
    detail::write_file(dir / "ttests.csv", os.str());
  }

  std::map<std::tuple<int, std::size_t, double, std::size_t>, double> mse;
  for (const auto& s : result.summary)
    mse[{static_cast<int>(s.cell.method), s.cell.k, s.cell.sigma_r, s.cell.horizon}] = s.mse;
  auto series_for = [&](auto&& key_of, std::size_t n_points) {
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (auto m : cfg.methods) {
      std::vector<double> ys;
      for (std::size_t i = 0; i < n_points; ++i) ys.push_back(mse[key_of(m, i)]);
      series.emplace_back(method_name(m), ys);
    }
    return series;
  };
  for (auto k : cfg.ks) {
    if (cfg.sigma_r.size() >= 2) {
      for (auto t : cfg.horizons) {
        auto series = series_for(
            [&](Method m, std::size_t i) { return std::tuple(static_cast<int>(m), k, cfg.sigma_r[i], t); },
            cfg.sigma_r.size());
        detail::write_file(dir / ("mse_vs_sigma_K" + std::to_string(k) + "_T" + std::to_string(t) + ".svg"),
                           detail::svg_line_plot("K = " + std::to_string(k) + ", T = " + std::to_string(t),
                                                 "sigma_R", cfg.sigma_r, series));
      }
    }
    if (cfg.horizons.size() >= 2) {
      std::vector<double> xs(cfg.horizons.begin(), cfg.horizons.end());
      for (double s : cfg.sigma_r) {
        auto series = series_for(
            [&](Method m, std::size_t i) { return std::tuple(static_cast<int>(m), k, s, cfg.horizons[i]); },
            cfg.horizons.size());
        detail::write_file(dir / ("mse_vs_T_K" + std::to_string(k) + "_sigma" + format_double(s) + ".svg"),
                           detail::svg_line_plot("K = " + std::to_string(k) + ", sigma_R = " + format_double(s),
                                                 "T", xs, series));
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Schema

/// JSON schema of the bench config with every default filled in.
inline nlohmann::json bench_config_schema() {
  const BenchConfig d;
  auto prop = [](const char* type, const nlohmann::json& def, const char* desc) {
    return nlohmann::json{{"type", type}, {"default", def}, {"description", desc}};
  };
  nlohmann::json env = {
      {"type", "object"},
      {"properties",
       {{"rows", prop("integer", d.env.rows, "grid rows")},
        {"cols", prop("integer", d.env.cols, "grid columns")},
        {"mu_mean", prop("number", d.env.mu_mean, "mean of the per-region order intensity mu_i")},
        {"mu_sd", prop("number", d.env.mu_sd, "sd of mu_i; draws are clamped below at 1")},
        {"init_drivers", prop("number", d.env.init_drivers, "drivers per region at t = 0")},
        {"sigma_r", prop("number", d.env.sigma_r, "reward noise sd; overridden by sweep.sigma_r")},
        {"horizon", prop("integer", d.env.horizon, "trajectory length; overridden by sweep.T")},
        {"seed", prop("integer", d.env.seed, "environment seed; overridden per replication")},
        {"include_time_of_day", prop("boolean", d.env.include_time_of_day, "append t mod 48 to the state")},
        {"driver_floor", prop("number", d.env.driver_floor, "lower bound on D in the attraction O/D term")},
        {"driver_cap", prop("number", d.env.driver_cap, "driver count above which a step fails")},
        {"include_self", prop("boolean", d.env.include_self, "count a unit in its own neighbor averages")},
        {"poisson_orders", prop("boolean", d.env.poisson_orders, "O ~ Poisson(mu); false sets O = mu")},
        {"driver_update", prop("string", d.env.driver_update,
                               "redistribute (drivers conserved) or as_written (literal, non-conserving)")},
        {"adjacency", {{"type", "object"}, {"description", "optional explicit graph: {neighbors, include_self}"}}}}}};
  nlohmann::json ratio = {
      {"type", "object"},
      {"properties",
       {{"hidden", prop("array", d.estimator.ratio.hidden, "hidden layer widths of the ratio network")},
        {"step_size", prop("number", d.estimator.ratio.step_size, "SGD step for the joint parameter vector; each unit moves by step_size / N")},
        {"batch_size", prop("integer", d.estimator.ratio.batch_size, "transitions per minibatch")},
        {"iterations", prop("integer", d.estimator.ratio.iterations, "SGD iterations")},
        {"bandwidth", prop("number", d.estimator.ratio.bandwidth, "RBF bandwidth; <= 0 uses the median heuristic")},
        {"full_dataset_z", prop("boolean", d.estimator.ratio.full_dataset_z,
                                "normalize over the whole trajectory instead of each batch")}}}};
  nlohmann::json q = {
      {"type", "object"},
      {"properties",
       {{"mu", prop("number", d.estimator.q.mu, "penalty of the inner smoother")},
        {"lambda", prop("number", d.estimator.q.lambda, "penalty of the Q function")},
        {"bandwidth_g", prop("number", d.estimator.q.bandwidth_g, "smoother bandwidth; <= 0 uses the median heuristic")},
        {"bandwidth_q", prop("number", d.estimator.q.bandwidth_q, "Q bandwidth; <= 0 uses the median heuristic")},
        {"center_cap", prop("integer", d.estimator.q.center_cap, "above this T the solver uses subsampled centers")},
        {"verify", prop("boolean", d.estimator.q.verify, "check stationarity and minimality of each solve")}}}};
  nlohmann::json estimator = {
      {"type", "object"},
      {"properties",
       {{"ratio", ratio},
        {"q", q},
        {"b_min", prop("number", d.estimator.b_min, "floor on behavior probabilities")},
        {"behavior_p", prop("number", d.estimator.behavior_p, "treatment probability of the behavior policy")},
        {"estimate_behavior", prop("boolean", d.estimator.estimate_behavior,
                                   "fit b_i by logistic regression instead of using the known p")}}}};
  nlohmann::json truth = {
      {"type", "object"},
      {"properties",
       {{"n_rollouts", prop("integer", d.truth.n_rollouts, "Monte Carlo rollouts per truth")},
        {"horizon", prop("integer", d.truth.horizon, "steps per rollout")},
        {"burn_in", prop("integer", d.truth.burn_in, "leading steps discarded")}}}};
  std::vector<std::string> methods;
  for (auto m : d.methods) methods.push_back(method_name(m));
  return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
          {"title", "bench config"},
          {"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"env", env},
            {"sweep",
             {{"type", "object"},
              {"properties",
               {{"sigma_r", prop("array", d.sigma_r, "reward noise levels")},
                {"T", prop("array", d.horizons, "trajectory lengths")},
                {"K", prop("array", d.ks, "number of treated regions in the target policy")}}}}},
            {"n_replications", prop("integer", d.n_replications, "replications per cell (>= 2)")},
            {"methods", prop("array", methods, "subset of DR, IS, DR_NS, DR_NM, QV, NAIVE")},
            {"estimator", estimator},
            {"truth", truth},
            {"out_dir", prop("string", d.out_dir, "output directory")},
            {"master_seed", prop("integer", d.master_seed, "root of every derived seed")},
            {"workers", prop("integer", d.workers, "parallel replications")},
            {"max_failure_fraction",
             prop("number", d.max_failure_fraction, "a cell with more failed replications fails the run")}}}};
}

}  // namespace mfope
