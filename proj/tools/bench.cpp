// bench: run the estimator comparison, compute Monte Carlo truths, or test
// a results table.
//
// Exit codes: 0 success, 1 other error, 2 configuration error, 3 too many
// failed replications in some cell.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mfope/mfope.hpp"

namespace {

using namespace mfope;

int cmd_run(const std::string& config_path, std::optional<std::size_t> workers, std::optional<std::string> out) {
  auto cfg = load_bench_config(config_path);
  if (workers) cfg.workers = *workers;
  if (out) cfg.out_dir = *out;
  cfg.validate();
  const auto result = run_benchmark(cfg);
  if (!emit_outputs(cfg, result, cfg.out_dir)) {
    std::cerr << "bench: no methods configured; wrote run_manifest.json only\n";
    return 2;
  }
  for (const auto& s : result.summary)
    std::printf("%-6s K=%zu sigma_r=%g T=%zu  MSE %.4g (se %.3g)  n=%zu\n", method_name(s.cell.method).c_str(),
                s.cell.k, s.cell.sigma_r, s.cell.horizon, s.mse, s.se, s.n);
  if (!result.ok()) {
    for (const auto& c : result.failed_cells) std::cerr << "bench: cell failed: " << c << '\n';
    return 3;
  }
  return 0;
}

int cmd_truth(const std::string& config_path, const std::string& policy_spec, std::optional<std::size_t> workers) {
  const auto cfg = load_bench_config(config_path);
  if (policy_spec.rfind("topk:", 0) != 0) throw ConfigError("policy must look like topk:K");
  std::size_t k = 0;
  try {
    k = std::stoul(policy_spec.substr(5));
  } catch (const std::logic_error&) {
    throw ConfigError("policy must look like topk:K");
  }
  const auto mu = Environment::draw_mu(cfg.env);
  const auto policy = Policy::top_k(mu, k);
  const auto t = mc_true_value(cfg.env, mu, policy, cfg.truth, derive_seed(cfg.master_seed, {k}),
                               workers.value_or(cfg.workers));
  std::cout << nlohmann::json{{"policy", policy_spec}, {"env_seed", cfg.env.seed}, {"truth", t}}.dump(2) << '\n';
  return 0;
}

int cmd_ttest(const std::string& in_path, const std::string& a, const std::string& b) {
  std::ifstream in(in_path);
  if (!in) throw ConfigError("cannot open " + in_path);
  const auto rows = read_results_csv(in);
  const auto ma = parse_method(a), mb = parse_method(b);
  std::set<std::tuple<double, std::size_t, std::size_t>> cells;
  for (const auto& r : rows) cells.insert({r.sigma_r, r.horizon, r.k});
  std::vector<TTestRow> out;
  for (const auto& [s, t, k] : cells) {
    const auto ea = cell_errors(rows, ma, k, s, t);
    const auto eb = cell_errors(rows, mb, k, s, t);
    if (ea.size() < 2 || ea.size() != eb.size()) continue;
    out.push_back({ma, mb, k, s, t, paired_t_test(ea, eb)});
  }
  write_ttests_csv(std::cout, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field off-policy evaluation benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_dir, policy = "topk:7", in_path, method_a = "DR", method_b = "QV";
  std::size_t workers = 1;

  auto* run = app.add_subcommand("run", "run the benchmark sweep");
  run->add_option("--config", config_path, "config JSON")->required()->check(CLI::ExistingFile);
  auto* run_workers = run->add_option("--workers", workers, "parallel replications");
  auto* run_out = run->add_option("--out", out_dir, "output directory");

  auto* truth = app.add_subcommand("truth", "Monte Carlo value of a top-K policy");
  truth->add_option("--config", config_path, "config JSON")->required()->check(CLI::ExistingFile);
  truth->add_option("--policy", policy, "topk:K");
  auto* truth_workers = truth->add_option("--workers", workers, "parallel rollouts");

  auto* ttest = app.add_subcommand("ttest", "paired one-sided t-tests from results.csv");
  ttest->add_option("--in", in_path, "results.csv")->required()->check(CLI::ExistingFile);
  ttest->add_option("--a", method_a, "method expected to have smaller error");
  ttest->add_option("--b", method_b, "comparison method");

  auto* schema = app.add_subcommand("schema", "print the config schema with defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run)
      return cmd_run(config_path, *run_workers ? std::optional(workers) : std::nullopt,
                     *run_out ? std::optional(out_dir) : std::nullopt);
    if (*truth) return cmd_truth(config_path, policy, *truth_workers ? std::optional(workers) : std::nullopt);
    if (*ttest) return cmd_ttest(in_path, method_a, method_b);
    if (*schema) {
      std::cout << bench_config_schema().dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "bench: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
