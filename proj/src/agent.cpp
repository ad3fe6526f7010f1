#include "drlra/agent.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace drlra::agent {

StateWindow::StateWindow(std::size_t nodes, std::size_t history)
    : nodes_(nodes), history_(history), bits_(nodes * history, 0) {}

void StateWindow::push(std::span<const std::uint8_t> newest) {
  if (newest.size() != nodes_) {
    throw std::invalid_argument("StateWindow::push: expected one flag per node");
  }
  if (history_ == 0) {
    return;
  }
  for (std::size_t n = 0; n < nodes_; ++n) {
    auto row = bits_.begin() + static_cast<std::ptrdiff_t>(n * history_);
    std::rotate(row, row + 1, row + static_cast<std::ptrdiff_t>(history_));
    row[static_cast<std::ptrdiff_t>(history_ - 1)] = newest[n] ? 1 : 0;
  }
}

void StateWindow::encode(double* out) const {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    out[i] = bits_[i];
  }
}

Eigen::VectorXd StateWindow::encode() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(bits_.size()));
  encode(v.data());
  return v;
}

EpsilonSchedule epsilon_next(const EpsilonSchedule& eps) {
  EpsilonSchedule next = eps;
  next.value = std::max(eps.floor, eps.value * eps.decay);
  return next;
}

std::size_t argmax_action(const Eigen::VectorXd& q) {
  if (q.size() == 0) {
    throw std::invalid_argument("argmax_action: empty Q vector");
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i) {
    if (q(i) > q(best)) {
      best = i;
    }
  }
  return static_cast<std::size_t>(best);
}

std::size_t select_action(const QNetwork& net, const StateWindow& state, double epsilon,
                          RngStream& rng) {
  if (epsilon > 0.0 && rng.uniform() < epsilon) {
    return rng.uniform_index(net.output_width());
  }
  return argmax_action(net.forward(state.encode()));
}

double reward(const NodeSet& predicted, const NodeSet& actual, const NodeSet& group) {
  const bool exact = set_intersection(predicted, group) == set_intersection(actual, group);
  return exact ? static_cast<double>(group.size()) : 0.0;
}

double q_target_tabular(double q, double r, double gamma, double alpha, double max_next_q) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("q_target_tabular: gamma must lie in [0,1]");
  }
  return q + alpha * (r + gamma * max_next_q - q);
}

double train_step(QNetwork& net, const QNetwork& target, std::span<const Experience> batch,
                  double gamma, Optimizer& optimizer) {
  if (batch.empty()) {
    throw std::invalid_argument("train_step: empty batch");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("train_step: gamma must lie in [0,1]");
  }
  const auto width = static_cast<Eigen::Index>(net.input_width());
  const auto count = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd states(width, count);
  Eigen::MatrixXd next_states(width, count);
  std::vector<std::size_t> actions(batch.size());
  for (Eigen::Index b = 0; b < count; ++b) {
    const Experience& e = batch[static_cast<std::size_t>(b)];
    if (static_cast<Eigen::Index>(e.state.nodes() * e.state.history()) != width) {
      throw std::invalid_argument("train_step: state width does not match the network");
    }
    e.state.encode(states.col(b).data());
    e.next_state.encode(next_states.col(b).data());
    actions[static_cast<std::size_t>(b)] = e.action;
  }
  // Targets use the pre-update parameters even when `target` aliases `net`.
  const Eigen::MatrixXd next_q = target.forward_batch(next_states);
  if (!next_q.allFinite()) {
    throw NonFiniteError("train_step: non-finite target Q values");
  }
  std::vector<double> targets(batch.size());
  for (Eigen::Index b = 0; b < count; ++b) {
    targets[static_cast<std::size_t>(b)] =
        batch[static_cast<std::size_t>(b)].reward + gamma * next_q.col(b).maxCoeff();
  }
  Gradients g = loss_gradient(net, states, actions, targets);
  if (!std::isfinite(g.loss)) {
    throw NonFiniteError("train_step: non-finite loss");
  }
  optimizer.apply(net, g);
  if (!net.all_finite()) {
    throw NonFiniteError("train_step: parameters became non-finite");
  }
  return g.loss;
}

double train_step(QNetwork& net, const QNetwork& target, std::span<const Experience> batch,
                  double gamma, double alpha) {
  Optimizer sgd(OptimizerKind::sgd, alpha);
  return train_step(net, target, batch, gamma, sgd);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) {
    throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
    head_ = items_.size() % capacity_;
    return;
  }
  items_[head_] = std::move(e);
  head_ = (head_ + 1) % capacity_;
}

const Experience& ReplayBuffer::newest() const {
  if (items_.empty()) {
    throw std::logic_error("ReplayBuffer::newest: empty buffer");
  }
  return items_[(head_ + capacity_ - 1) % capacity_ % items_.size()];
}

std::vector<Experience> ReplayBuffer::sample(std::size_t count, RngStream& rng) const {
  if (items_.empty()) {
    throw std::logic_error("ReplayBuffer::sample: empty buffer");
  }
  std::vector<Experience> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(items_[rng.uniform_index(items_.size())]);
  }
  return out;
}

void AgentParams::validate() const {
  if (group_size < 1 || group_size > 10) {
    throw std::invalid_argument("AgentParams: group_size must lie in [1,10]");
  }
  if (history < 1) {
    throw std::invalid_argument("AgentParams: history must be positive");
  }
  if (hidden_width < 1) {
    throw std::invalid_argument("AgentParams: hidden_width must be positive");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("AgentParams: gamma must lie in [0,1]");
  }
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("AgentParams: alpha must be positive");
  }
  if (replay && (batch_size < 1 || replay_capacity < batch_size)) {
    throw std::invalid_argument("AgentParams: need 1 <= batch_size <= replay_capacity");
  }
  if (target_network && target_refresh < 1) {
    throw std::invalid_argument("AgentParams: target_refresh must be positive");
  }
  if (!(epsilon.floor >= 0.0 && epsilon.floor <= epsilon.value && epsilon.value <= 1.0)) {
    throw std::invalid_argument("AgentParams: need 0 <= epsilon floor <= start <= 1");
  }
  if (!(epsilon.decay > 0.0 && epsilon.decay <= 1.0)) {
    throw std::invalid_argument("AgentParams: epsilon decay must lie in (0,1]");
  }
}

std::vector<std::size_t> network_layout(std::size_t group_nodes, const AgentParams& params) {
  std::vector<std::size_t> sizes;
  sizes.push_back(group_nodes * params.history);
  for (std::size_t i = 0; i < params.hidden_layers; ++i) {
    sizes.push_back(params.hidden_width);
  }
  sizes.push_back(std::size_t{1} << group_nodes);
  return sizes;
}

EnsembleAgent::EnsembleAgent(std::size_t k_nodes, AgentParams params, RngStream init_rng)
    : k_nodes_(k_nodes), params_(params), epsilon_(params.epsilon) {
  params_.validate();
  if (k_nodes == 0) {
    throw std::invalid_argument("EnsembleAgent: K must be positive");
  }
  for (std::size_t first = 0, g = 0; first < k_nodes; first += params_.group_size, ++g) {
    Member m{{}, {}, {}, ReplayBuffer(params_.replay ? params_.replay_capacity : 1),
             Optimizer(params_.optimizer, params_.alpha)};
    const std::size_t last = std::min(k_nodes, first + params_.group_size);
    for (std::size_t k = first; k < last; ++k) {
      m.nodes.emplace_back(k);
    }
    RngStream rng = init_rng.derive(g);
    m.online = QNetwork::random(network_layout(m.nodes.size(), params_), rng);
    m.target = m.online;
    members_.push_back(std::move(m));
  }
}

std::vector<StateWindow> EnsembleAgent::empty_windows() const {
  std::vector<StateWindow> out;
  for (const auto& m : members_) {
    out.emplace_back(m.nodes.size(), params_.history);
  }
  return out;
}

std::size_t EnsembleAgent::act(std::size_t g, const StateWindow& window, double epsilon,
                               RngStream& rng) const {
  return select_action(members_.at(g).online, window, epsilon, rng);
}

NodeSet EnsembleAgent::subset_nodes(std::size_t g, std::size_t action) const {
  const auto& nodes = members_.at(g).nodes;
  if (action >= (std::size_t{1} << nodes.size())) {
    throw std::out_of_range("subset_nodes: action index out of range");
  }
  NodeSet out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (action & (std::size_t{1} << i)) {
      out.push_back(nodes[i]);
    }
  }
  return out;
}

std::size_t EnsembleAgent::subset_index(std::size_t g, const NodeSet& nodes) const {
  const auto& members = members_.at(g).nodes;
  std::size_t index = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (contains(nodes, members[i])) {
      index |= std::size_t{1} << i;
    }
  }
  return index;
}

std::vector<std::uint8_t> EnsembleAgent::group_flags(std::size_t g, const NodeSet& active) const {
  const auto& members = members_.at(g).nodes;
  std::vector<std::uint8_t> flags(members.size(), 0);
  for (std::size_t i = 0; i < members.size(); ++i) {
    flags[i] = contains(active, members[i]) ? 1 : 0;
  }
  return flags;
}

void EnsembleAgent::clear_replay() {
  for (Member& m : members_) {
    m.replay.clear();
  }
}

void EnsembleAgent::remember(std::size_t g, Experience e) {
  members_.at(g).replay.push(std::move(e));
}

double EnsembleAgent::learn(std::size_t g, RngStream& rng) {
  Member& m = members_.at(g);
  std::vector<Experience> batch;
  if (params_.replay) {
    if (m.replay.size() < params_.batch_size) {
      return -1.0;
    }
    batch = m.replay.sample(params_.batch_size, rng);
  } else {
    if (m.replay.size() == 0) {
      return -1.0;
    }
    batch.push_back(m.replay.newest());
  }
  const QNetwork& target = params_.target_network ? m.target : m.online;
  const double loss = train_step(m.online, target, batch, params_.gamma, m.optimizer);
  ++m.steps;
  if (params_.target_network && m.steps % params_.target_refresh == 0) {
    m.target = m.online;
  }
  return loss;
}

// --- checkpoints ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'R', 'L', 'R', 'A', 'Q', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kLittleEndian = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(bytes, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw ParseError("checkpoint truncated", 0);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

} // namespace

void EnsembleAgent::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, kVersion);
  out.put(static_cast<char>(kLittleEndian));
  put_u64(out, k_nodes_);
  put_u64(out, params_.group_size);
  put_u64(out, params_.history);
  put_u64(out, params_.hidden_width);
  put_u64(out, params_.hidden_layers);
  put_f64(out, params_.gamma);
  put_f64(out, params_.alpha);
  put_u64(out, params_.optimizer == OptimizerKind::adam ? 1 : 0);
  put_u64(out, params_.replay ? 1 : 0);
  put_u64(out, params_.replay_capacity);
  put_u64(out, params_.batch_size);
  put_u64(out, params_.target_network ? 1 : 0);
  put_u64(out, params_.target_refresh);
  put_f64(out, params_.epsilon.value);
  put_f64(out, params_.epsilon.floor);
  put_f64(out, params_.epsilon.decay);
  put_f64(out, epsilon_.value);
  put_u64(out, members_.size());
  for (const auto& m : members_) {
    put_u64(out, m.nodes.size());
    for (NodeId n : m.nodes) {
      put_u64(out, n.index);
    }
    const auto& sizes = m.online.layer_sizes();
    put_u64(out, sizes.size());
    for (std::size_t s : sizes) {
      put_u64(out, s);
    }
    for (double v : m.online.flat_parameters()) {
      put_f64(out, v);
    }
  }
}

EnsembleAgent EnsembleAgent::load(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kMagic)) {
    throw ParseError("not an agent checkpoint", 0);
  }
  if (get_u64(in) != kVersion) {
    throw ParseError("unsupported checkpoint version", 0);
  }
  if (in.get() != kLittleEndian) {
    throw ParseError("unsupported checkpoint byte order", 0);
  }
  EnsembleAgent agent;
  agent.k_nodes_ = get_u64(in);
  AgentParams& p = agent.params_;
  p.group_size = get_u64(in);
  p.history = get_u64(in);
  p.hidden_width = get_u64(in);
  p.hidden_layers = get_u64(in);
  p.gamma = get_f64(in);
  p.alpha = get_f64(in);
  p.optimizer = get_u64(in) == 1 ? OptimizerKind::adam : OptimizerKind::sgd;
  p.replay = get_u64(in) != 0;
  p.replay_capacity = get_u64(in);
  p.batch_size = get_u64(in);
  p.target_network = get_u64(in) != 0;
  p.target_refresh = get_u64(in);
  p.epsilon.value = get_f64(in);
  p.epsilon.floor = get_f64(in);
  p.epsilon.decay = get_f64(in);
  p.validate();
  agent.epsilon_ = p.epsilon;
  agent.epsilon_.value = get_f64(in);
  const std::uint64_t groups = get_u64(in);
  if (groups > agent.k_nodes_) {
    throw ParseError("checkpoint: group count exceeds K", 0);
  }
  for (std::uint64_t g = 0; g < groups; ++g) {
    Member m{{}, {}, {}, ReplayBuffer(p.replay ? p.replay_capacity : 1),
             Optimizer(p.optimizer, p.alpha)};
    const std::uint64_t count = get_u64(in);
    if (count == 0 || count > p.group_size) {
      throw ParseError("checkpoint: bad group size", 0);
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t id = get_u64(in);
      if (id >= agent.k_nodes_) {
        throw ParseError("checkpoint: node id out of range", 0);
      }
      m.nodes.emplace_back(static_cast<std::size_t>(id));
    }
    const std::uint64_t layers = get_u64(in);
    if (layers < 2 || layers > 64) {
      throw ParseError("checkpoint: bad layer count", 0);
    }
    std::vector<std::size_t> sizes;
    for (std::uint64_t l = 0; l < layers; ++l) {
      sizes.push_back(get_u64(in));
    }
    if (sizes != network_layout(m.nodes.size(), p)) {
      throw ParseError("checkpoint: layer sizes do not match the header", 0);
    }
    m.online = QNetwork(sizes);
    std::vector<double> values(m.online.parameter_count());
    for (double& v : values) {
      v = get_f64(in);
    }
    m.online.set_flat_parameters(values);
    m.target = m.online;
    agent.members_.push_back(std::move(m));
  }
  return agent;
}

void EnsembleAgent::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint '" + path + "'");
  }
  save(out);
}

EnsembleAgent EnsembleAgent::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint '" + path + "'");
  }
  return load(in);
}

} // namespace drlra::agent
