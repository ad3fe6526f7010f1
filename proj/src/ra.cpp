#include "drlra/ra.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace drlra::ra {

SlotOutcome simulate_ra_contention(const NodeSet& active, const RaConfig& cfg, RngStream& rng) {
  if (cfg.m_sequences == 0) {
    throw std::invalid_argument("simulate_ra_contention: M must be positive");
  }
  SlotOutcome out;
  out.ra_attempted = active;
  if (active.empty()) {
    return out;
  }
  std::vector<std::size_t> pick(active.size());
  std::vector<std::uint32_t> load(cfg.m_sequences, 0);
  for (std::size_t i = 0; i < active.size(); ++i) {
    pick[i] = rng.uniform_index(cfg.m_sequences);
    ++load[pick[i]];
  }
  NodeSet detected;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (load[pick[i]] == 1) {
      detected.push_back(active[i]);
    } else {
      out.ra_collided.push_back(active[i]);
    }
  }
  if (detected.size() <= cfg.n_rbs) {
    out.ra_delivered = std::move(detected);
  } else {
    for (std::size_t idx : sample_without_replacement(detected.size(), cfg.n_rbs, rng)) {
      out.ra_delivered.push_back(detected[idx]);
    }
  }
  return out;
}

double collision_free_prob(std::size_t n_active, std::size_t m_sequences) {
  if (m_sequences == 0) {
    throw std::invalid_argument("collision_free_prob: M must be positive");
  }
  if (n_active == 0) {
    throw std::invalid_argument("collision_free_prob: needs at least one contender");
  }
  if (m_sequences == 1) {
    return n_active == 1 ? 1.0 : 0.0;
  }
  return std::pow(1.0 - 1.0 / static_cast<double>(m_sequences),
                  static_cast<double>(n_active - 1));
}

std::vector<double> singleton_distribution(std::size_t n, std::size_t m_sequences) {
  if (m_sequences == 0) {
    throw std::invalid_argument("singleton_distribution: M must be positive");
  }
  // prob[s][d]: s sequences held by exactly one contender, d by two or more.
  const std::size_t max_d = n / 2 + 1;
  std::vector<std::vector<double>> prob(n + 2, std::vector<double>(max_d + 1, 0.0));
  std::vector<std::vector<double>> next = prob;
  prob[0][0] = 1.0;
  const double m = static_cast<double>(m_sequences);
  for (std::size_t placed = 0; placed < n; ++placed) {
    for (auto& row : next) {
      std::fill(row.begin(), row.end(), 0.0);
    }
    for (std::size_t s = 0; s <= placed; ++s) {
      for (std::size_t d = 0; 2 * d + s <= placed && d <= max_d; ++d) {
        const double p = prob[s][d];
        if (p == 0.0) {
          continue;
        }
        const double empty = m - static_cast<double>(s + d);
        if (empty > 0.0) {
          next[s + 1][d] += p * empty / m;
        }
        if (s > 0) {
          next[s - 1][d + 1] += p * static_cast<double>(s) / m;
        }
        if (d > 0) {
          next[s][d] += p * static_cast<double>(d) / m;
        }
      }
    }
    std::swap(prob, next);
  }
  std::vector<double> dist(n + 1, 0.0);
  for (std::size_t s = 0; s <= n; ++s) {
    for (std::size_t d = 0; d <= max_d; ++d) {
      dist[s] += prob[s][d];
    }
  }
  return dist;
}

double expected_capped_singletons(std::size_t n, std::size_t m_sequences, std::size_t cap) {
  if (n == 0) {
    return 0.0;
  }
  if (n <= cap) {
    return static_cast<double>(n) * collision_free_prob(n, m_sequences);
  }
  const auto dist = singleton_distribution(n, m_sequences);
  double expected = 0.0;
  for (std::size_t u = 0; u < dist.size(); ++u) {
    expected += dist[u] * static_cast<double>(std::min(u, cap));
  }
  return expected;
}

double verbatim_slot_term(double n_active, std::size_t m_sequences, std::size_t n_rbs) {
  if (m_sequences == 0) {
    throw std::invalid_argument("verbatim_slot_term: M must be positive");
  }
  if (!(n_active > 0.0)) {
    return 0.0;
  }
  const double p = std::pow(1.0 - 1.0 / static_cast<double>(m_sequences), n_active - 1.0);
  if (p == 0.0) {
    return 0.0;
  }
  return std::min(p, static_cast<double>(n_rbs) / (n_active * p));
}

RateSeries analytic_ra_rate(std::span<const std::size_t> active_counts, const RaConfig& cfg,
                            std::size_t k_nodes, RateMode mode) {
  if (k_nodes == 0) {
    throw std::invalid_argument("analytic_ra_rate: K must be positive");
  }
  std::map<std::size_t, double> memo;
  std::vector<double> per_slot;
  per_slot.reserve(active_counts.size());
  const double k = static_cast<double>(k_nodes);
  for (std::size_t n : active_counts) {
    auto it = memo.find(n);
    if (it == memo.end()) {
      double term = 0.0;
      if (n > 0) {
        term = mode == RateMode::verbatim
                   ? verbatim_slot_term(static_cast<double>(n), cfg.m_sequences, cfg.n_rbs)
                   : expected_capped_singletons(n, cfg.m_sequences, cfg.n_rbs);
      }
      it = memo.emplace(n, term / k).first;
    }
    per_slot.push_back(it->second);
  }
  return RateSeries(std::move(per_slot));
}

std::vector<SlotOutcome> run_ra_scheme(const ActivityTrace& trace, std::size_t begin,
                                       std::size_t end, const RaConfig& cfg, RngStream& rng) {
  if (begin > end || end > trace.t_slots()) {
    throw std::out_of_range("run_ra_scheme: bad slot range");
  }
  std::vector<SlotOutcome> outcomes;
  outcomes.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    SlotOutcome o = simulate_ra_contention(trace.active_set(t), cfg, rng);
    o.slot = t;
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

} // namespace drlra::ra
