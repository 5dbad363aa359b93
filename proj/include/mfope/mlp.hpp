#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfope/error.hpp"
#include "mfope/rng.hpp"

namespace mfope {

/// softplus(x) = log(1 + e^x), evaluated without overflow.
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Fully connected network with tanh hidden layers and a softplus scalar
/// output, so every prediction is strictly positive.
class PositiveMlp {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
  };

  PositiveMlp() = default;

  /// `widths` = {input, hidden..., }; a scalar output layer is appended.
  /// The output layer starts small with bias log(e - 1), so the initial
  /// prediction is close to 1 everywhere.
  PositiveMlp(std::vector<int> widths, std::uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("PositiveMlp: need an input and a hidden width");
    widths.push_back(1);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const int in = widths[l];
      const int out = widths[l + 1];
      const bool last = l + 2 == widths.size();
      const double sd = (last ? 0.1 : 1.0) / std::sqrt(static_cast<double>(in));
      std::normal_distribution<double> normal(0.0, sd);
      Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = normal(rng);
      if (last) layer.bias(0) = std::log(std::exp(1.0) - 1.0);
      layers_.push_back(std::move(layer));
    }
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Eigen::Index input_dim() const { return layers_.front().weight.cols(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  Eigen::VectorXd parameters() const {
    Eigen::VectorXd p(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
      p.segment(k, l.weight.size()) = l.weight.reshaped();
      k += l.weight.size();
      p.segment(k, l.bias.size()) = l.bias;
      k += l.bias.size();
    }
    return p;
  }

  void set_parameters(const Eigen::VectorXd& p) {
    if (p.size() != parameter_count()) throw ConfigError("PositiveMlp: parameter length mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = p.segment(k, l.weight.size());
      k += l.weight.size();
      l.bias = p.segment(k, l.bias.size());
      k += l.bias.size();
    }
  }

  /// Cached activations of a batched forward pass (rows are samples).
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // input, hidden outputs
    Eigen::VectorXd pre_output;
    Eigen::VectorXd output;
  };

  Tape forward(const Eigen::MatrixXd& x) const {
    Tape tape;
    tape.activations.push_back(x);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      Eigen::MatrixXd h = tape.activations.back() * layers_[l].weight.transpose();
      h.rowwise() += layers_[l].bias.transpose();
      tape.activations.push_back(h.array().tanh().matrix());
    }
    const auto& last = layers_.back();
    tape.pre_output = tape.activations.back() * last.weight.row(0).transpose();
    tape.pre_output.array() += last.bias(0);
    tape.output = tape.pre_output.unaryExpr([](double v) { return softplus(v); });
    return tape;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const { return forward(x).output; }

  /// Accumulates d(loss)/d(theta) into `grad` given d(loss)/d(output).
  void backward(const Tape& tape, const Eigen::VectorXd& d_output, Eigen::VectorXd& grad) const {
    std::vector<Eigen::Index> offset(layers_.size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      offset[l] = k;
      k += layers_[l].weight.size() + layers_[l].bias.size();
    }
    const Eigen::VectorXd d_pre =
        d_output.cwiseProduct(tape.pre_output.unaryExpr([](double v) { return sigmoid(v); }));

    // Output layer.
    {
      const auto& last = layers_.back();
      const auto& h = tape.activations.back();
      const Eigen::Index o = offset.back();
      grad.segment(o, last.weight.size()) += (h.transpose() * d_pre);
      grad(o + last.weight.size()) += d_pre.sum();
    }
    Eigen::MatrixXd delta = d_pre * layers_.back().weight;  // batch x width
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
      const auto& h = tape.activations[l + 1];
      delta = delta.cwiseProduct((1.0 - h.array().square()).matrix());
      const Eigen::MatrixXd gw = delta.transpose() * tape.activations[l];
      const Eigen::Index o = offset[l];
      grad.segment(o, gw.size()) += gw.reshaped();
      grad.segment(o + gw.size(), layers_[l].bias.size()) += delta.colwise().sum().transpose();
      if (l > 0) delta = delta * layers_[l].weight;
    }
  }

 private:
  std::vector<Layer> layers_;
};

}  // namespace mfope
