#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"
#include "mfope/features.hpp"
#include "mfope/kernel.hpp"
#include "mfope/mlp.hpp"
#include "mfope/rng.hpp"

namespace mfope {

/// Stationary density ratio omega_i of the mean-field triple, as a positive
/// network on standardized inputs divided by a normalization constant.
struct RatioModel {
  PositiveMlp net;
  Standardizer input;
  KernelSpec kernel;
  double z = 1.0;

  /// Raw network output (before dividing by z).
  Eigen::VectorXd raw(const Eigen::MatrixXd& tilde) const { return net.predict(input.apply(tilde)); }

  /// Normalized ratio omega(x) / z.
  Eigen::VectorXd operator()(const Eigen::MatrixXd& tilde) const { return raw(tilde) / z; }
};

/// Delta = omega(S~_t) * indicator / b - omega(S~_{t+1}).
inline double delta(double omega_now, double omega_next, double indicator, double propensity) {
  return omega_now * indicator / propensity - omega_next;
}

/// |M|^{-1} Delta^T K Delta.
inline double discriminator_loss(const Eigen::VectorXd& deltas, const Eigen::MatrixXd& gram) {
  if (gram.rows() != deltas.size() || gram.cols() != deltas.size())
    throw ConfigError("discriminator_loss: Gram shape mismatch");
  if (deltas.size() < 1) throw ConfigError("discriminator_loss: empty batch");
  return deltas.dot(gram * deltas) / static_cast<double>(deltas.size());
}

inline double discriminator_loss(const Eigen::VectorXd& deltas, const Eigen::MatrixXd& next_points,
                                 const KernelSpec& kernel) {
  if (!kernel.resolved()) throw ConfigError("discriminator_loss: unresolved bandwidth");
  return discriminator_loss(deltas, rbf_gram(next_points, next_points, kernel.bandwidth));
}

/// z = mean of the raw ratio over a dataset.
inline double normalize(const RatioModel& model, const Eigen::MatrixXd& tilde) {
  if (tilde.rows() == 0) throw ConfigError("normalize: empty dataset");
  return model.raw(tilde).mean();
}

struct RatioConfig {
  std::vector<int> hidden = {32, 32};
  double step_size = 1e-3;
  std::size_t batch_size = 32;
  std::size_t iterations = 2000;
  double bandwidth = 0.0;  // <= 0: median heuristic on the first batch
  bool full_dataset_z = false;
  // Units sharing the joint update. Each unit's block moves by step_size / joint_units;
  // fit_view sets this to N.
  std::size_t joint_units = 1;
};

inline void to_json(nlohmann::json& j, const RatioConfig& c) {
  j = nlohmann::json{{"hidden", c.hidden},
                     {"step_size", c.step_size},
                     {"batch_size", c.batch_size},
                     {"iterations", c.iterations},
                     {"bandwidth", c.bandwidth},
                     {"full_dataset_z", c.full_dataset_z},
                     {"joint_units", c.joint_units}};
}

inline RatioConfig ratio_config_from_json(const nlohmann::json& j) {
  RatioConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.step_size = j.value("step_size", c.step_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.bandwidth = j.value("bandwidth", c.bandwidth);
  c.full_dataset_z = j.value("full_dataset_z", c.full_dataset_z);
  c.joint_units = j.value("joint_units", c.joint_units);
  if (c.batch_size < 2) throw ConfigError("ratio: batch_size must be >= 2");
  if (!(c.step_size > 0)) throw ConfigError("ratio: step_size must be positive");
  if (c.joint_units < 1) throw ConfigError("ratio: joint_units must be >= 1");
  return c;
}

/// Self-normalized minibatch objective and its gradient in the network
/// parameters. Inputs are already standardized. When `fixed_z` is positive
/// it replaces the batch normalization constant (and is not differentiated).
struct BatchObjective {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

inline BatchObjective ratio_batch_objective(const PositiveMlp& net, const Eigen::MatrixXd& now,
                                            const Eigen::MatrixXd& next, const Eigen::VectorXd& weight,
                                            const Eigen::MatrixXd& gram, double fixed_z = 0.0) {
  const auto m = static_cast<double>(now.rows());
  const auto tape_now = net.forward(now);
  const auto tape_next = net.forward(next);
  const Eigen::VectorXd& u = tape_now.output;
  const Eigen::VectorXd& v = tape_next.output;
  const bool batch_z = !(fixed_z > 0.0);
  const double z = batch_z ? v.mean() : fixed_z;
  const Eigen::VectorXd d = (u.cwiseProduct(weight) - v) / z;
  const Eigen::VectorXd kd = gram * d;

  BatchObjective out;
  out.loss = d.dot(kd) / m;
  const Eigen::VectorXd g = 2.0 * kd / m;  // dL/dDelta
  const Eigen::VectorXd d_u = g.cwiseProduct(weight) / z;
  Eigen::VectorXd d_v = -g / z;
  if (batch_z) d_v.array() -= g.dot(d) / (z * m);
  out.gradient = Eigen::VectorXd::Zero(net.parameter_count());
  net.backward(tape_now, d_u, out.gradient);
  net.backward(tape_next, d_v, out.gradient);
  return out;
}

/// Algorithm: minibatch SGD on the RKHS-discriminated moment violation, with
/// the network normalized by its batch mean on S~_{t+1}. Deterministic in
/// `seed`. The returned model's z is its mean over S~_1..S~_T.
inline RatioModel fit_ratio(const UnitSample& sample, const RatioConfig& cfg, std::uint64_t seed) {
  const auto horizon = static_cast<Eigen::Index>(sample.horizon());
  if (horizon < static_cast<Eigen::Index>(cfg.batch_size))
    throw ConfigError("fit_ratio: horizon shorter than the batch size");
  if (sample.indicator.sum() <= 0.0)
    throw DataError("fit_ratio: target policy never matched in the data for unit " +
                    std::to_string(sample.unit));

  RatioModel model;
  model.input = Standardizer::fit(sample.tilde);
  const Eigen::MatrixXd x = model.input.apply(sample.tilde);
  std::vector<int> widths{static_cast<int>(x.cols())};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  model.net = PositiveMlp(widths, derive_seed(seed, {0}));
  const Eigen::VectorXd weight = sample.weight();

  Rng rng(derive_seed(seed, {1}));
  std::vector<Eigen::Index> index(static_cast<std::size_t>(horizon));
  std::iota(index.begin(), index.end(), Eigen::Index{0});
  const auto b = static_cast<Eigen::Index>(cfg.batch_size);
  Eigen::MatrixXd now(b, x.cols()), next(b, x.cols());
  Eigen::VectorXd w(b);

  auto draw_batch = [&] {
    for (Eigen::Index k = 0; k < b; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), index.size() - 1);
      std::swap(index[static_cast<std::size_t>(k)], index[pick(rng)]);
      const auto t = index[static_cast<std::size_t>(k)];
      now.row(k) = x.row(t);
      next.row(k) = x.row(t + 1);
      w(k) = weight(t);
    }
  };

  model.kernel.bandwidth = cfg.bandwidth;
  if (!model.kernel.resolved()) {
    draw_batch();
    model.kernel.bandwidth = median_heuristic(next);
  }

  const double step = cfg.step_size / static_cast<double>(cfg.joint_units);
  Eigen::VectorXd theta = model.net.parameters();
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    draw_batch();
    const Eigen::MatrixXd gram = rbf_gram(next, next, model.kernel.bandwidth);
    double fixed_z = 0.0;
    if (cfg.full_dataset_z) fixed_z = model.net.predict(x.bottomRows(horizon)).mean();
    const auto obj = ratio_batch_objective(model.net, now, next, w, gram, fixed_z);
    if (!std::isfinite(obj.loss) || !obj.gradient.allFinite())
      throw NumericError("fit_ratio: non-finite loss at iteration " + std::to_string(iter) +
                         " (step size too large?)");
    theta -= step * obj.gradient;
    if (!theta.allFinite())
      throw NumericError("fit_ratio: parameters overflowed at iteration " + std::to_string(iter) +
                         " (step size too large?)");
    model.net.set_parameters(theta);
  }
  model.z = normalize(model, sample.tilde.bottomRows(horizon));
  if (!(model.z > 0.0) || !std::isfinite(model.z))
    throw NumericError("fit_ratio: degenerate normalization constant");
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json ratio_to_json(const RatioModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.net.layers()) {
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"version", 1}, {"layers", layers}, {"input", m.input}, {"kernel", m.kernel}, {"z", m.z}};
}

namespace detail {
inline constexpr char kRatioMagic[8] = {'M', 'F', 'O', 'P', 'E', 'R', 'A', 'T'};
inline constexpr std::uint32_t kRatioVersion = 1;

inline void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
inline void read_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw ConfigError("ratio checkpoint: truncated input");
}
template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("ratio checkpoint: truncated input");
  return v;
}
}  // namespace detail

/// Layout: magic "MFOPERAT", u32 version, u32 layer count, per layer
/// (u64 rows, u64 cols, weights col-major, bias), u64 input dim, means,
/// scales, f64 bandwidth, f64 z.
inline void write_ratio_checkpoint(std::ostream& os, const RatioModel& m) {
  using namespace detail;
  os.write(kRatioMagic, sizeof(kRatioMagic));
  write_pod<std::uint32_t>(os, kRatioVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.net.layers().size()));
  for (const auto& l : m.net.layers()) {
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(l.weight.rows()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(l.weight.cols()));
    write_doubles(os, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    write_doubles(os, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.input.mean.size()));
  write_doubles(os, m.input.mean.data(), static_cast<std::size_t>(m.input.mean.size()));
  write_doubles(os, m.input.scale.data(), static_cast<std::size_t>(m.input.scale.size()));
  write_pod<double>(os, m.kernel.bandwidth);
  write_pod<double>(os, m.z);
  if (!os) throw std::runtime_error("ratio checkpoint: write failed");
}

inline RatioModel read_ratio_checkpoint(std::istream& is) {
  using namespace detail;
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kRatioMagic)) throw ConfigError("ratio checkpoint: bad magic");
  if (read_pod<std::uint32_t>(is) != kRatioVersion) throw ConfigError("ratio checkpoint: bad version");
  const auto n_layers = read_pod<std::uint32_t>(is);
  RatioModel m;
  std::vector<int> widths;
  std::vector<PositiveMlp::Layer> layers;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto rows = static_cast<Eigen::Index>(read_pod<std::uint64_t>(is));
    const auto cols = static_cast<Eigen::Index>(read_pod<std::uint64_t>(is));
    PositiveMlp::Layer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    read_doubles(is, layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    read_doubles(is, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    if (l == 0) widths.push_back(static_cast<int>(cols));
    if (l + 1 < n_layers) widths.push_back(static_cast<int>(rows));
    layers.push_back(std::move(layer));
  }
  m.net = PositiveMlp(widths, 0);
  m.net.layers() = std::move(layers);
  const auto dim = static_cast<Eigen::Index>(read_pod<std::uint64_t>(is));
  m.input.mean.resize(dim);
  m.input.scale.resize(dim);
  read_doubles(is, m.input.mean.data(), static_cast<std::size_t>(dim));
  read_doubles(is, m.input.scale.data(), static_cast<std::size_t>(dim));
  m.kernel.bandwidth = read_pod<double>(is);
  m.z = read_pod<double>(is);
  return m;
}

}  // namespace mfope
