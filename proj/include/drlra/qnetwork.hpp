#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drlra/rng.hpp"

namespace drlra::agent {

/// Raised when a forward or backward pass produces NaN or infinity.
class NonFiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Fully connected network: affine + ReLU on every hidden layer, affine
/// output. layer_sizes = {input, hidden..., output}.
class QNetwork {
public:
  QNetwork() = default;
  /// All weights and biases zero.
  explicit QNetwork(std::vector<std::size_t> layer_sizes);

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static QNetwork random(std::vector<std::size_t> layer_sizes, RngStream& rng);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_width() const { return sizes_.front(); }
  std::size_t output_width() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t parameter_count() const;

  /// weight(l) maps layer l to layer l+1 and has shape sizes[l+1] x sizes[l].
  Eigen::MatrixXd& weight(std::size_t l) { return weights_[l]; }
  const Eigen::MatrixXd& weight(std::size_t l) const { return weights_[l]; }
  Eigen::VectorXd& bias(std::size_t l) { return biases_[l]; }
  const Eigen::VectorXd& bias(std::size_t l) const { return biases_[l]; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  /// One sample per column.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  /// Layer by layer: the weight matrix row-major, then the bias.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);

  bool all_finite() const;

  friend bool operator==(const QNetwork& a, const QNetwork& b);

private:
  std::vector<std::size_t> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Gradient of a scalar loss with respect to every parameter of a QNetwork.
struct Gradients {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::vector<double> flat() const;
};

/// L = (1/B) sum_b (targets[b] - Q(inputs[:, b])[actions[b]])^2 and its
/// gradient by backpropagation.
Gradients loss_gradient(const QNetwork& net, const Eigen::MatrixXd& inputs,
                        std::span<const std::size_t> actions, std::span<const double> targets);

enum class OptimizerKind { sgd, adam };

/// First-order update rule. SGD is theta <- theta - alpha * grad. Adam keeps
/// per-parameter moment estimates (beta1 0.9, beta2 0.999, eps 1e-8).
class Optimizer {
public:
  Optimizer(OptimizerKind kind = OptimizerKind::sgd, double learning_rate = 0.001);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }

  void apply(QNetwork& net, const Gradients& grads);

private:
  OptimizerKind kind_;
  double lr_;
  std::size_t steps_ = 0;
  std::vector<Eigen::MatrixXd> m_w_, v_w_;
  std::vector<Eigen::VectorXd> m_b_, v_b_;
};

} // namespace drlra::agent
