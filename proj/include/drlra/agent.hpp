#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "drlra/core.hpp"
#include "drlra/qnetwork.hpp"
#include "drlra/rng.hpp"

namespace drlra::agent {

/// Activity seen by the AP over the last `history` slots for the nodes of one
/// group. Column 0 is the oldest slot.
class StateWindow {
public:
  StateWindow() = default;
  StateWindow(std::size_t nodes, std::size_t history);

  std::size_t nodes() const { return nodes_; }
  std::size_t history() const { return history_; }

  bool at(std::size_t node, std::size_t column) const {
    return bits_[node * history_ + column] != 0;
  }
  void set(std::size_t node, std::size_t column, bool value) {
    bits_[node * history_ + column] = value ? 1 : 0;
  }

  /// Drops the oldest column and appends `newest` (one flag per node).
  void push(std::span<const std::uint8_t> newest);

  /// Node-major flattening, written to out[0 .. nodes*history).
  void encode(double* out) const;
  Eigen::VectorXd encode() const;

  friend bool operator==(const StateWindow&, const StateWindow&) = default;

private:
  std::size_t nodes_ = 0;
  std::size_t history_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct Experience {
  StateWindow state;
  std::size_t action = 0;
  double reward = 0.0;
  StateWindow next_state;
};

/// epsilon <- max(floor, epsilon * decay) once per slot.
struct EpsilonSchedule {
  double value = 1.0;
  double floor = 0.01;
  double decay = 0.995;
};

EpsilonSchedule epsilon_next(const EpsilonSchedule& eps);

/// Lowest index among the maximal entries.
std::size_t argmax_action(const Eigen::VectorXd& q);

/// epsilon-greedy choice of a subset index.
std::size_t select_action(const QNetwork& net, const StateWindow& state, double epsilon,
                          RngStream& rng);

/// |group| when the prediction restricted to the group equals the actual
/// activity restricted to the group, else 0.
double reward(const NodeSet& predicted, const NodeSet& actual, const NodeSet& group);

/// Tabular Q-learning step q + alpha (r + gamma max_next_q - q).
double q_target_tabular(double q, double r, double gamma, double alpha, double max_next_q);

/// One Bellman regression step on `batch`. Targets come from `target`
/// (which may alias `net`) and are computed before `net` changes. Returns
/// the loss before the update.
double train_step(QNetwork& net, const QNetwork& target, std::span<const Experience> batch,
                  double gamma, Optimizer& optimizer);

/// Plain gradient step theta <- theta - alpha grad L.
double train_step(QNetwork& net, const QNetwork& target, std::span<const Experience> batch,
                  double gamma, double alpha);

/// Fixed-capacity ring buffer with uniform sampling.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear() {
    items_.clear();
    head_ = 0;
  }
  const Experience& newest() const;

  /// `count` draws with replacement.
  std::vector<Experience> sample(std::size_t count, RngStream& rng) const;

private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Experience> items_;
};

struct AgentParams {
  std::size_t group_size = 4;
  std::size_t history = 4;
  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 3;
  double gamma = 0.05;
  double alpha = 0.001;
  OptimizerKind optimizer = OptimizerKind::sgd;
  // Stabilisers. With both off the agent trains on the latest transition
  // only and bootstraps from its own parameters.
  bool replay = true;
  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 32;
  bool target_network = true;
  std::size_t target_refresh = 100;
  EpsilonSchedule epsilon{};

  void validate() const;
};

/// One Q-network per group of at most `group_size` consecutive nodes; each
/// network scores the 2^|group| subsets of its group.
class EnsembleAgent {
public:
  EnsembleAgent() = default;
  EnsembleAgent(std::size_t k_nodes, AgentParams params, RngStream init_rng);

  std::size_t k_nodes() const { return k_nodes_; }
  const AgentParams& params() const { return params_; }
  std::size_t group_count() const { return members_.size(); }
  const NodeSet& group(std::size_t g) const { return members_[g].nodes; }
  const QNetwork& network(std::size_t g) const { return members_[g].online; }
  QNetwork& network(std::size_t g) { return members_[g].online; }

  std::vector<StateWindow> empty_windows() const;

  const EpsilonSchedule& epsilon() const { return epsilon_; }
  void set_epsilon(EpsilonSchedule eps) { epsilon_ = eps; }
  void decay_epsilon() { epsilon_ = epsilon_next(epsilon_); }

  std::size_t act(std::size_t g, const StateWindow& window, double epsilon, RngStream& rng) const;

  /// Members of group g selected by subset index `action` (bit i <-> i-th member).
  NodeSet subset_nodes(std::size_t g, std::size_t action) const;
  std::size_t subset_index(std::size_t g, const NodeSet& nodes) const;
  /// Activity of group g's members in `active`, one flag per member.
  std::vector<std::uint8_t> group_flags(std::size_t g, const NodeSet& active) const;

  void remember(std::size_t g, Experience e);
  /// Empties every group's replay buffer; networks and epsilon are kept.
  void clear_replay();
  /// One training step for group g. Returns the pre-update loss, or a
  /// negative value when the replay buffer is still shorter than a batch.
  double learn(std::size_t g, RngStream& rng);

  /// Versioned little-endian binary checkpoint of all networks.
  void save(std::ostream& out) const;
  static EnsembleAgent load(std::istream& in);
  void save_file(const std::string& path) const;
  static EnsembleAgent load_file(const std::string& path);

private:
  struct Member {
    NodeSet nodes;
    QNetwork online;
    QNetwork target;
    ReplayBuffer replay;
    Optimizer optimizer;
    std::size_t steps = 0;
  };

  std::size_t k_nodes_ = 0;
  AgentParams params_;
  EpsilonSchedule epsilon_;
  std::vector<Member> members_;
};

std::vector<std::size_t> network_layout(std::size_t group_nodes, const AgentParams& params);

} // namespace drlra::agent
