#include "drlra/qnetwork.hpp"

#include <cmath>

namespace drlra::agent {

QNetwork::QNetwork(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("QNetwork: need at least input and output layers");
  }
  for (std::size_t s : sizes_) {
    if (s == 0) {
      throw std::invalid_argument("QNetwork: layer width must be positive");
    }
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(sizes_[l]);
    weights_.push_back(Eigen::MatrixXd::Zero(rows, cols));
    biases_.push_back(Eigen::VectorXd::Zero(rows));
  }
}

QNetwork QNetwork::random(std::vector<std::size_t> layer_sizes, RngStream& rng) {
  QNetwork net(std::move(layer_sizes));
  for (auto& w : net.weights_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    // Row-major fill keeps the draw order independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
  }
  return net;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd& input) const {
  if (static_cast<std::size_t>(input.size()) != input_width()) {
    throw std::invalid_argument("QNetwork::forward: input width " + std::to_string(input.size()) +
                                " != " + std::to_string(input_width()));
  }
  Eigen::VectorXd h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * h + biases_[l];
    h = (l + 1 < weights_.size()) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return h;
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_width()) {
    throw std::invalid_argument("QNetwork::forward_batch: input width mismatch");
  }
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = (weights_[l] * h).colwise() + biases_[l];
    h = (l + 1 < weights_.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return h;
}

std::vector<double> QNetwork::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
        out.push_back(weights_[l](r, c));
      }
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) {
      out.push_back(biases_[l](r));
    }
  }
  return out;
}

void QNetwork::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw std::invalid_argument("QNetwork::set_flat_parameters: size mismatch");
  }
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
        weights_[l](r, c) = values[i++];
      }
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) {
      biases_[l](r) = values[i++];
    }
  }
}

bool QNetwork::all_finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
      return false;
    }
  }
  return true;
}

bool operator==(const QNetwork& a, const QNetwork& b) {
  if (a.sizes_ != b.sizes_) {
    return false;
  }
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) {
      return false;
    }
  }
  return true;
}

std::vector<double> Gradients::flat() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) {
        out.push_back(weights[l](r, c));
      }
    }
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) {
      out.push_back(biases[l](r));
    }
  }
  return out;
}

Gradients loss_gradient(const QNetwork& net, const Eigen::MatrixXd& inputs,
                        std::span<const std::size_t> actions, std::span<const double> targets) {
  const auto batch = inputs.cols();
  if (batch == 0 || actions.size() != static_cast<std::size_t>(batch) ||
      targets.size() != static_cast<std::size_t>(batch)) {
    throw std::invalid_argument("loss_gradient: batch size mismatch");
  }
  if (static_cast<std::size_t>(inputs.rows()) != net.input_width()) {
    throw std::invalid_argument("loss_gradient: input width mismatch");
  }
  const std::size_t layers = net.layer_count();

  // Forward pass keeping each layer's input (post-activation) and pre-activation.
  std::vector<Eigen::MatrixXd> acts;
  std::vector<Eigen::MatrixXd> pre;
  acts.reserve(layers);
  pre.reserve(layers);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    pre.push_back((net.weight(l) * acts.back()).colwise() + net.bias(l));
    if (l + 1 < layers) {
      acts.push_back(pre.back().cwiseMax(0.0));
    }
  }
  const Eigen::MatrixXd& q = pre.back();
  if (!q.allFinite()) {
    throw NonFiniteError("loss_gradient: non-finite Q values in forward pass");
  }

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  const double scale = 1.0 / static_cast<double>(batch);
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(b)]);
    if (a >= q.rows()) {
      throw std::invalid_argument("loss_gradient: action index out of range");
    }
    const double err = targets[static_cast<std::size_t>(b)] - q(a, b);
    g.loss += err * err * scale;
    delta(a, b) = -2.0 * err * scale;
  }
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = delta * acts[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      // ReLU passes gradient where its input was >= 0 (f(x) = x there).
      Eigen::MatrixXd back = net.weight(l).transpose() * delta;
      delta = back.cwiseProduct((pre[l - 1].array() >= 0.0).cast<double>().matrix());
    }
  }
  return g;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("Optimizer: learning rate must be positive");
  }
}

void Optimizer::apply(QNetwork& net, const Gradients& grads) {
  const std::size_t layers = net.layer_count();
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t l = 0; l < layers; ++l) {
      net.weight(l) -= lr_ * grads.weights[l];
      net.bias(l) -= lr_ * grads.biases[l];
    }
    return;
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  if (m_w_.size() != layers) {
    m_w_.clear();
    v_w_.clear();
    m_b_.clear();
    v_b_.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      m_w_.push_back(Eigen::MatrixXd::Zero(net.weight(l).rows(), net.weight(l).cols()));
      v_w_.push_back(m_w_.back());
      m_b_.push_back(Eigen::VectorXd::Zero(net.bias(l).size()));
      v_b_.push_back(m_b_.back());
    }
    steps_ = 0;
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
  const double step = lr_ * std::sqrt(c2) / c1;
  for (std::size_t l = 0; l < layers; ++l) {
    m_w_[l] = beta1 * m_w_[l] + (1.0 - beta1) * grads.weights[l];
    v_w_[l] = beta2 * v_w_[l] + (1.0 - beta2) * grads.weights[l].cwiseProduct(grads.weights[l]);
    net.weight(l).array() -= step * m_w_[l].array() / (v_w_[l].array().sqrt() + eps);
    m_b_[l] = beta1 * m_b_[l] + (1.0 - beta1) * grads.biases[l];
    v_b_[l] = beta2 * v_b_[l] + (1.0 - beta2) * grads.biases[l].cwiseProduct(grads.biases[l]);
    net.bias(l).array() -= step * m_b_[l].array() / (v_b_[l].array().sqrt() + eps);
  }
}

} // namespace drlra::agent
