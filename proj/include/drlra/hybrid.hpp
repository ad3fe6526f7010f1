#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "drlra/agent.hpp"
#include "drlra/core.hpp"
#include "drlra/ra.hpp"
#include "drlra/rng.hpp"

namespace drlra::hybrid {

__extension__ typedef unsigned __int128 uint128;

/// N RBs split into N1 granted from DRL predictions and N2 = N - N1 left for
/// random access.
struct HybridConfig {
  std::size_t n_total = 10;
  std::size_t n_drl = 5;
  std::size_t m_sequences = 54;

  std::size_t n_ra() const { return n_total - n_drl; }
  void validate() const;
};

/// Per-slot prediction counts: predicted active, of which correct and
/// mistaken, plus active nodes predicted inactive.
struct EpsilonStats {
  double k_active = 0.0;
  double k_cor_active = 0.0;
  double k_mis_active = 0.0;
  double k_mis_inactive = 0.0;
};

struct HybridSlotResult {
  SlotOutcome outcome;
  double reward = 0.0;
  std::vector<double> group_rewards;
  std::vector<std::size_t> actions;
  NodeSet predicted;
  /// Nodes the AP saw: DRL deliveries plus RA detections.
  NodeSet observed;
  std::vector<agent::StateWindow> windows;
};

struct SlotOptions {
  double epsilon = 0.0;
  /// Feed true activity into the state windows and reward (diagnostics only).
  bool ground_truth_state = false;
};

/// One slot of the DRL-aided scheme. Predicted nodes get RBs (a uniform
/// N1-subset when there are more than N1); active nodes without a grant
/// contend for the N2 RBs; windows and rewards use what the AP observed.
HybridSlotResult run_slot(const agent::EnsembleAgent& agent,
                          const std::vector<agent::StateWindow>& windows, const NodeSet& active,
                          const HybridConfig& cfg, RngStream& rng, const SlotOptions& options = {});

struct RunControl {
  bool learn = false;
  bool ground_truth_state = false;
};

struct HybridRun {
  std::vector<SlotOutcome> outcomes;
  std::vector<double> rewards;
  std::vector<NodeSet> predicted;
  double last_loss = 0.0;
};

/// Runs slots [begin, end). With `learn`, the agent explores with its current
/// epsilon, stores one experience per group per slot, trains every group once
/// per slot and decays epsilon; otherwise it acts greedily and is unchanged.
/// `windows` carries the observation history in and out.
HybridRun run_hybrid(agent::EnsembleAgent& agent, const ActivityTrace& trace, std::size_t begin,
                     std::size_t end, const HybridConfig& cfg,
                     std::vector<agent::StateWindow>& windows, const RunControl& control,
                     RngStream& rng);

/// x! / (y! (x-y)!), 0 when y > x. Exact up to the long double mantissa; see
/// binom_exact for the integer value.
long double binom(std::size_t x, std::size_t y);

/// Exact binomial coefficient when it fits in 128 bits.
std::optional<uint128> binom_exact(std::size_t x, std::size_t y);

/// C(c, j) C(m, n - j) / C(c + m, n): chance that exactly j of the n grants
/// land on the c correctly predicted nodes.
double grant_split_probability(std::size_t k_cor, std::size_t k_mis, std::size_t n_grants,
                               std::size_t j);

/// Expected number of correctly predicted active nodes left without an RB
/// when N1 RBs go uniformly to the k_cor + k_mis predicted nodes: the
/// case-split binomial sum over j = n2..m2 correct grants, weighted by the
/// k_cor - j nodes left over.
double noRB_expected(std::size_t k_cor, std::size_t k_mis, std::size_t n_drl);

/// Rounds fractional counts to the nearest nonnegative integer first.
double noRB_expected(double k_cor, double k_mis, std::size_t n_drl);

/// Hypergeometric mean k_cor * max(0, 1 - n_drl / (k_cor + k_mis)).
double noRB_closed_form(double k_cor, double k_mis, std::size_t n_drl);

/// Closed-form rate of the DRL-aided scheme from per-slot statistics.
///   verbatim               RA-stage term only, with V = k_mis_inactive +
///                          noRB_expected in place of K^a and N2 for N
///   simulation_consistent  expected DRL deliveries plus expected RA
///                          deliveries, averaged over the grant lottery
RateSeries analytic_hybrid_rate(std::span<const EpsilonStats> stats, const HybridConfig& cfg,
                                std::size_t k_nodes, ra::RateMode mode);

/// Per-slot RA-stage and DRL-stage expectations (already divided by K).
struct StageTerms {
  double drl = 0.0;
  double ra = 0.0;
};
std::vector<StageTerms> analytic_hybrid_terms(std::span<const EpsilonStats> stats,
                                              const HybridConfig& cfg, std::size_t k_nodes,
                                              ra::RateMode mode);

/// Greedy replay of `trace` without learning, counting predictions against
/// the true activity in every slot.
std::vector<EpsilonStats> estimate_eps_stats(const agent::EnsembleAgent& agent,
                                             const ActivityTrace& trace, const HybridConfig& cfg,
                                             RngStream& rng);

/// N1 in [0, N] maximising the simulation-consistent analytic rate; ties go
/// to the smaller N1.
std::size_t select_n1(std::span<const EpsilonStats> stats, std::size_t n_total,
                      std::size_t m_sequences, std::size_t k_nodes);

/// `slot,drl_granted,drl_delivered,wasted,ra_attempted,ra_collided,ra_delivered,reward`.
void write_slot_results(std::ostream& out, std::span<const SlotOutcome> outcomes,
                        std::span<const double> rewards);

/// `slot,k_active,k_cor_active,k_mis_active,k_mis_inactive`.
void write_stats_csv(std::ostream& out, std::span<const EpsilonStats> stats);
std::vector<EpsilonStats> read_stats_csv(std::istream& in);

} // namespace drlra::hybrid
