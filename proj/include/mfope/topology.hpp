#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"

namespace mfope {

/// Binary treatment assignment, one entry per unit.
using ActionVector = std::vector<int>;

/// Per-unit state vectors stacked row-wise: row i is S_{i,t}.
using GlobalState = Eigen::MatrixXd;

/// Neighborhood structure N(i) over a fixed set of units.
///
/// Immutable after construction. Neighbor lists are sorted, free of
/// duplicates, symmetric and nonempty. When `include_self()` is true every
/// unit is its own neighbor, otherwise no unit is.
class SpatialGraph {
 public:
  SpatialGraph(std::vector<std::vector<std::size_t>> neighbors, bool include_self)
      : neighbors_(std::move(neighbors)), include_self_(include_self) {
    const std::size_t n = neighbors_.size();
    if (n == 0) throw ConfigError("SpatialGraph: no units");
    for (std::size_t i = 0; i < n; ++i) {
      auto& nb = neighbors_[i];
      for (auto j : nb) {
        if (j >= n) {
          throw ConfigError("SpatialGraph: neighbor index " + std::to_string(j) +
                            " out of range for unit " + std::to_string(i));
        }
        if (j == i && !include_self_) {
          throw ConfigError("SpatialGraph: unit " + std::to_string(i) +
                            " lists itself but include_self is false");
        }
      }
      std::sort(nb.begin(), nb.end());
      if (std::adjacent_find(nb.begin(), nb.end()) != nb.end()) {
        throw ConfigError("SpatialGraph: duplicate neighbor for unit " + std::to_string(i));
      }
      if (include_self_ && !std::binary_search(nb.begin(), nb.end(), i)) {
        nb.insert(std::lower_bound(nb.begin(), nb.end(), i), i);
      }
      if (nb.empty()) {
        throw ConfigError("SpatialGraph: unit " + std::to_string(i) + " has no neighbors");
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (auto j : neighbors_[i]) {
        if (!std::binary_search(neighbors_[j].begin(), neighbors_[j].end(), i)) {
          throw ConfigError("SpatialGraph: asymmetric edge " + std::to_string(i) + " -> " +
                            std::to_string(j));
        }
      }
    }
  }

  std::size_t n_units() const { return neighbors_.size(); }
  bool include_self() const { return include_self_; }
  std::span<const std::size_t> neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t degree(std::size_t i) const { return neighbors_.at(i).size(); }

  /// N(i) ∪ {i}, sorted.
  std::vector<std::size_t> closed_neighbors(std::size_t i) const {
    std::vector<std::size_t> out(neighbors_.at(i));
    if (!std::binary_search(out.begin(), out.end(), i)) {
      out.insert(std::lower_bound(out.begin(), out.end(), i), i);
    }
    return out;
  }

  std::size_t directed_edge_count() const {
    std::size_t e = 0;
    for (const auto& nb : neighbors_) e += nb.size();
    return e;
  }

  const std::vector<std::vector<std::size_t>>& adjacency() const { return neighbors_; }

 private:
  std::vector<std::vector<std::size_t>> neighbors_;
  bool include_self_;
};

/// 4-connected rows x cols lattice, units numbered row-major.
inline SpatialGraph grid_adjacency(std::size_t rows, std::size_t cols, bool include_self = false) {
  if (rows == 0 || cols == 0 || rows * cols < 2) {
    throw ConfigError("grid_adjacency: need at least two units, got " + std::to_string(rows) +
                      "x" + std::to_string(cols));
  }
  std::vector<std::vector<std::size_t>> nb(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      auto& list = nb[r * cols + c];
      if (r > 0) list.push_back((r - 1) * cols + c);
      if (r + 1 < rows) list.push_back((r + 1) * cols + c);
      if (c > 0) list.push_back(r * cols + c - 1);
      if (c + 1 < cols) list.push_back(r * cols + c + 1);
    }
  }
  return SpatialGraph(std::move(nb), include_self);
}

/// Every unit adjacent to every other one (and to itself when requested).
inline SpatialGraph complete_graph(std::size_t n, bool include_self) {
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) nb[i].push_back(j);
  return SpatialGraph(std::move(nb), include_self);
}

inline void to_json(nlohmann::json& j, const SpatialGraph& g) {
  j = nlohmann::json{{"n_units", g.n_units()},
                     {"neighbors", g.adjacency()},
                     {"include_self", g.include_self()}};
}

inline SpatialGraph graph_from_json(const nlohmann::json& j) {
  try {
    auto neighbors = j.at("neighbors").get<std::vector<std::vector<std::size_t>>>();
    const bool include_self = j.value("include_self", false);
    if (j.contains("n_units") && j.at("n_units").get<std::size_t>() != neighbors.size()) {
      throw ConfigError("graph JSON: n_units does not match neighbor list count");
    }
    return SpatialGraph(std::move(neighbors), include_self);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("graph JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Mean-field views

inline void check_binary(std::span<const int> a) {
  for (int v : a)
    if (v != 0 && v != 1) throw ConfigError("action entries must be 0 or 1");
}

/// Number of treated units in N(i).
inline int neighbor_action_count(const SpatialGraph& g, std::span<const int> a, std::size_t i) {
  if (a.size() != g.n_units()) throw ConfigError("action vector length != n_units");
  for (int v : a)
    if (v != 0 && v != 1) throw ConfigError("action entries must be 0 or 1");
  int k = 0;
  for (auto j : g.neighbors(i)) k += a[j];
  return k;
}

/// m_i^a(a): fraction of treated neighbors.
inline double mean_field_action(const SpatialGraph& g, std::span<const int> a, std::size_t i) {
  return static_cast<double>(neighbor_action_count(g, a, i)) /
         static_cast<double>(g.degree(i));
}

/// m_i^s(s): componentwise neighbor average of the state rows.
inline Eigen::VectorXd mean_field_state(const SpatialGraph& g, const GlobalState& s, std::size_t i) {
  if (static_cast<std::size_t>(s.rows()) != g.n_units())
    throw ConfigError("state row count != n_units");
  if (i >= g.n_units()) throw std::out_of_range("mean_field_state: unit index");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.cols());
  for (auto j : g.neighbors(i)) acc += s.row(static_cast<Eigen::Index>(j)).transpose();
  return acc / static_cast<double>(g.degree(i));
}

/// The mean-field triple (m_i^a(pi(S_t)), S_{i,t}, m_i^s(S_t)).
struct TildeState {
  double mf_policy_action = 0.0;
  Eigen::VectorXd own_state;
  Eigen::VectorXd mf_state;

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(1 + own_state.size() + mf_state.size());
    out << mf_policy_action, own_state, mf_state;
    return out;
  }
};

inline TildeState tilde_state(const SpatialGraph& g, const GlobalState& s,
                              std::span<const int> policy_actions, std::size_t i) {
  TildeState t;
  t.mf_policy_action = mean_field_action(g, policy_actions, i);
  t.own_state = s.row(static_cast<Eigen::Index>(i)).transpose();
  t.mf_state = mean_field_state(g, s, i);
  return t;
}

/// Z_{i,t} = (A_{i,t}, m_i^a(A_t), S_{i,t}, m_i^s(S_t)) and
/// Z*_{i,t} = (pi_i(S_{t+1}), tilde S_{i,t+1}); both flatten to the same layout.
struct LocalTransition {
  Eigen::VectorXd z;
  Eigen::VectorXd z_star;
  double reward = 0.0;
};

inline Eigen::VectorXd local_input(const SpatialGraph& g, const GlobalState& s,
                                   std::span<const int> a, std::size_t i) {
  const auto own = s.row(static_cast<Eigen::Index>(i)).transpose();
  const auto mf = mean_field_state(g, s, i);
  Eigen::VectorXd z(2 + own.size() + mf.size());
  z << static_cast<double>(a[i]), mean_field_action(g, a, i), own, mf;
  return z;
}

inline LocalTransition local_transition(const SpatialGraph& g, const GlobalState& s,
                                        std::span<const int> actions, const GlobalState& s_next,
                                        std::span<const int> policy_next, std::size_t i,
                                        double reward) {
  return {local_input(g, s, actions, i), local_input(g, s_next, policy_next, i), reward};
}

}  // namespace mfope
