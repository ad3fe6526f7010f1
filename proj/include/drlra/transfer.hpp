#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "drlra/agent.hpp"
#include "drlra/config.hpp"
#include "drlra/hybrid.hpp"

namespace drlra::harness {

struct TransferPoint {
  double fraction = 0.0;
  std::size_t live_slots = 0;
  /// Seed means of the held-out reward per node and slot.
  double pretrained_reward = 0.0;
  double control_reward = 0.0;
  /// Percent of the control reward at fraction 1.
  double pretrained_pct = 0.0;
  double control_pct = 0.0;
};

struct TransferResult {
  std::size_t sufficient_slots = 0;
  /// Seed-averaged held-out reward of the control during its longest run.
  std::vector<std::size_t> checkpoint_slots;
  std::vector<double> control_curve;
  double reference_reward = 0.0;
  std::vector<TransferPoint> points;
};

/// First checkpoint from which every later reward stays within `tolerance`
/// (relative) of the mean over the final `tail` share of the run.
std::size_t plateau_point(std::span<const std::size_t> slots, std::span<const double> rewards,
                          double tolerance, double tail);

/// Greedy reward per node and slot over [begin, end), starting from empty
/// observation windows. The agent is not modified.
double heldout_reward(const agent::EnsembleAgent& agent, const ActivityTrace& trace,
                      std::size_t begin, std::size_t end, const hybrid::HybridConfig& cfg,
                      RngStream rng);

/// Pretrain on CMMPP traffic, fine-tune on a share of the live slots, and
/// compare against an agent trained on live slots only.
TransferResult run_transfer(const ExperimentConfig& cfg, const TransferSpec& spec);

/// `fraction,pretrained_reward_pct,control_reward_pct`.
void write_transfer_csv(std::ostream& out, const TransferResult& result);
/// `slot,control_reward` plus a `sufficient_slots,<n>` trailer.
void write_control_curve_csv(std::ostream& out, const TransferResult& result);

} // namespace drlra::harness
