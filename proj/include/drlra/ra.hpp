#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "drlra/core.hpp"
#include "drlra/rng.hpp"

namespace drlra::ra {

/// Grant-based random access: M orthonormal sequences and N resource blocks.
struct RaConfig {
  std::size_t m_sequences = 54;
  std::size_t n_rbs = 10;
};

/// How the closed-form rates are evaluated.
///   verbatim               per-slot min{(1-1/M)^(n-1), N / (n (1-1/M)^(n-1))}
///   simulation_consistent  per-slot E[min(U_n, N)] / K, U_n the number of
///                          uniquely chosen sequences among n contenders;
///                          equals n (1-1/M)^(n-1) / K whenever n <= N.
enum class RateMode { verbatim, simulation_consistent };

/// One contention round. Every node in `active` picks a sequence uniformly;
/// nodes with a unique pick are detected, and at most N of them (a uniform
/// subset if more) are granted and deliver. Only the ra_* fields are set.
SlotOutcome simulate_ra_contention(const NodeSet& active, const RaConfig& cfg, RngStream& rng);

/// (1 - 1/M)^(n - 1): a given contender's pick is unique among n.
double collision_free_prob(std::size_t n_active, std::size_t m_sequences);

/// Exact distribution of the number of sequences picked by exactly one of
/// `n` contenders; element u is P(U = u).
std::vector<double> singleton_distribution(std::size_t n, std::size_t m_sequences);

/// E[min(U_n, cap)].
double expected_capped_singletons(std::size_t n, std::size_t m_sequences, std::size_t cap);

/// Verbatim per-slot term for a possibly fractional contender count; 0 when n <= 0.
double verbatim_slot_term(double n_active, std::size_t m_sequences, std::size_t n_rbs);

RateSeries analytic_ra_rate(std::span<const std::size_t> active_counts, const RaConfig& cfg,
                            std::size_t k_nodes, RateMode mode);

/// Conventional scheme on slots [begin, end) of `trace`.
std::vector<SlotOutcome> run_ra_scheme(const ActivityTrace& trace, std::size_t begin,
                                       std::size_t end, const RaConfig& cfg, RngStream& rng);

} // namespace drlra::ra
