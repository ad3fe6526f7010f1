#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drlra {

/// Index of an IoT node within a cell, in [0, K).
struct NodeId {
  std::uint32_t index = 0;

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint32_t i) : index(i) {}
  constexpr explicit NodeId(std::size_t i) : index(static_cast<std::uint32_t>(i)) {}
  constexpr explicit NodeId(int i) : index(static_cast<std::uint32_t>(i)) {}

  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

/// Sorted, duplicate-free set of nodes.
using NodeSet = std::vector<NodeId>;

NodeSet make_node_set(std::vector<NodeId> nodes);
NodeSet set_union(const NodeSet& a, const NodeSet& b);
NodeSet set_intersection(const NodeSet& a, const NodeSet& b);
NodeSet set_difference(const NodeSet& a, const NodeSet& b);
bool is_subset(const NodeSet& sub, const NodeSet& super);
bool contains(const NodeSet& set, NodeId node);

/// Thrown when an input file or record cannot be parsed. `line()` is 1-based,
/// or 0 when the error is not tied to a line.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// K x T binary activity matrix, A_k(t) = 1 when node k is active in slot t.
class ActivityTrace {
public:
  ActivityTrace() = default;
  /// All-zero trace.
  ActivityTrace(std::size_t k_nodes, std::size_t t_slots);
  /// Row-major (node, slot) entries; each must be 0 or 1.
  ActivityTrace(std::size_t k_nodes, std::size_t t_slots, std::vector<std::uint8_t> active);

  std::size_t k_nodes() const { return k_nodes_; }
  std::size_t t_slots() const { return t_slots_; }

  bool active(std::size_t node, std::size_t slot) const {
    return data_[node * t_slots_ + slot] != 0;
  }
  bool active(NodeId node, std::size_t slot) const { return active(node.index, slot); }

  /// Nodes active in `slot`.
  NodeSet active_set(std::size_t slot) const;

  /// Slots [begin, end) as a new trace with the same nodes.
  ActivityTrace slice(std::size_t begin, std::size_t end) const;

  const std::vector<std::uint8_t>& raw() const { return data_; }

  friend bool operator==(const ActivityTrace&, const ActivityTrace&) = default;

private:
  std::size_t k_nodes_ = 0;
  std::size_t t_slots_ = 0;
  std::vector<std::uint8_t> data_;
};

/// RB grants in one slot, I_k(t) = 1 for every granted node.
struct SlotAllocation {
  NodeSet granted;

  bool feasible(std::size_t n_rbs) const { return granted.size() <= n_rbs; }
};

/// Everything that happened in one slot under either scheme.
struct SlotOutcome {
  std::size_t slot = 0;
  NodeSet drl_granted;
  NodeSet drl_delivered;
  NodeSet ra_attempted;
  NodeSet ra_collided;
  NodeSet ra_delivered;
  std::size_t wasted_rbs = 0;

  /// Nodes whose sequence was unique and therefore seen by the AP.
  NodeSet ra_detected() const { return set_difference(ra_attempted, ra_collided); }

  std::size_t delivered_count() const { return drl_delivered.size() + ra_delivered.size(); }
};

/// Returns a description of the first violated SlotOutcome invariant, if any.
std::optional<std::string> check_outcome(const SlotOutcome& outcome, const NodeSet& active,
                                         std::size_t n_drl, std::size_t n_ra);

/// Per-slot packet rate and its arithmetic mean.
class RateSeries {
public:
  RateSeries() = default;
  explicit RateSeries(std::vector<double> per_slot);

  const std::vector<double>& per_slot() const { return per_slot_; }
  double mean() const { return mean_; }
  std::size_t size() const { return per_slot_.size(); }

  /// `slot,rate` header, one row per slot, then `mean,<value>`.
  void write_csv(std::ostream& out) const;
  static RateSeries read_csv(std::istream& in);

private:
  std::vector<double> per_slot_;
  double mean_ = 0.0;
};

/// R = (1/T)(1/K) sum_t sum_k A_k(t) I_k(t), counting delivered packets.
RateSeries average_packet_rate(std::span<const SlotOutcome> outcomes, std::size_t k_nodes);

/// Optimal allocator with known activity: min(K^a(t), N) / K per slot.
RateSeries genie_rate(const ActivityTrace& trace, std::size_t n_rbs);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

} // namespace drlra
