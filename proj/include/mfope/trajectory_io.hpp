#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

#include "mfope/simulator.hpp"

namespace mfope {

/// Columnar CSV: one row per (t, unit). The terminal state row (t = T) has
/// empty action and reward fields.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,unit,D,O,M,action,reward\n";
  os << std::setprecision(17);
  const auto n = traj.n_units();
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const auto& s = traj.states[t];
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      os << t << ',' << i << ',' << s(r, 0) << ',' << s(r, 1) << ',' << s(r, 2) << ',';
      if (t < traj.horizon()) {
        os << traj.actions[t][i] << ',' << traj.rewards(r, static_cast<Eigen::Index>(t));
      } else {
        os << ',';
      }
      os << '\n';
    }
  }
}

namespace detail {

inline constexpr std::array<char, 8> kTrajectoryMagic = {'M', 'F', 'O', 'P', 'E', 'T', 'R', 'J'};
inline constexpr std::uint32_t kTrajectoryVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("trajectory binary: truncated input");
  return v;
}

}  // namespace detail

/// Binary layout (little-endian host order):
///   magic "MFOPETRJ", u32 version, u64 N, u64 T, u64 state_dim, u8 include_self,
///   per unit: u64 degree + u64 neighbor ids,
///   (T+1) * N * state_dim f64 states, T * N u8 actions, N * T f64 rewards (row-major),
///   u32 length + UTF-8 JSON of the environment config.
inline void write_trajectory_binary(std::ostream& os, const Trajectory& traj) {
  using detail::put;
  traj.validate();
  os.write(detail::kTrajectoryMagic.data(), detail::kTrajectoryMagic.size());
  put<std::uint32_t>(os, detail::kTrajectoryVersion);
  const auto n = traj.n_units();
  const auto dim = static_cast<std::uint64_t>(traj.states.front().cols());
  put<std::uint64_t>(os, n);
  put<std::uint64_t>(os, traj.horizon());
  put<std::uint64_t>(os, dim);
  put<std::uint8_t>(os, traj.graph.include_self() ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = traj.graph.neighbors(i);
    put<std::uint64_t>(os, nb.size());
    for (auto j : nb) put<std::uint64_t>(os, j);
  }
  for (const auto& s : traj.states)
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) put<double>(os, s(r, c));
  for (const auto& a : traj.actions)
    for (int v : a) put<std::uint8_t>(os, static_cast<std::uint8_t>(v));
  for (Eigen::Index r = 0; r < traj.rewards.rows(); ++r)
    for (Eigen::Index c = 0; c < traj.rewards.cols(); ++c) put<double>(os, traj.rewards(r, c));
  const std::string cfg = nlohmann::json(traj.config).dump();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  if (!os) throw std::runtime_error("trajectory binary: write failed");
}

inline Trajectory read_trajectory_binary(std::istream& is) {
  using detail::get;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != detail::kTrajectoryMagic) throw ConfigError("trajectory binary: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != detail::kTrajectoryVersion)
    throw ConfigError("trajectory binary: unsupported version " + std::to_string(version));
  const auto n = get<std::uint64_t>(is);
  const auto horizon = get<std::uint64_t>(is);
  const auto dim = get<std::uint64_t>(is);
  const bool include_self = get<std::uint8_t>(is) != 0;
  std::vector<std::vector<std::size_t>> nb(n);
  for (auto& list : nb) {
    const auto deg = get<std::uint64_t>(is);
    for (std::uint64_t k = 0; k < deg; ++k) {
      const auto j = get<std::uint64_t>(is);
      if (include_self && j == static_cast<std::uint64_t>(&list - nb.data())) continue;
      list.push_back(j);
    }
  }
  Trajectory traj;
  traj.graph = SpatialGraph(std::move(nb), include_self);
  traj.states.resize(horizon + 1);
  for (auto& s : traj.states) {
    s.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) s(r, c) = get<double>(is);
  }
  traj.actions.assign(horizon, ActionVector(n));
  for (auto& a : traj.actions)
    for (auto& v : a) v = get<std::uint8_t>(is);
  traj.rewards.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(horizon));
  for (Eigen::Index r = 0; r < traj.rewards.rows(); ++r)
    for (Eigen::Index c = 0; c < traj.rewards.cols(); ++c) traj.rewards(r, c) = get<double>(is);
  const auto len = get<std::uint32_t>(is);
  std::string cfg(len, '\0');
  is.read(cfg.data(), len);
  if (!is) throw ConfigError("trajectory binary: truncated config");
  traj.config = env_config_from_json(nlohmann::json::parse(cfg));
  traj.validate();
  return traj;
}

}  // namespace mfope
