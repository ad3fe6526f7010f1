#include "drlra/hybrid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

namespace drlra::hybrid {

void HybridConfig::validate() const {
  if (n_drl > n_total) {
    throw std::invalid_argument("HybridConfig: N1 must not exceed N");
  }
  if (m_sequences == 0) {
    throw std::invalid_argument("HybridConfig: M must be positive");
  }
}

HybridSlotResult run_slot(const agent::EnsembleAgent& agent,
                          const std::vector<agent::StateWindow>& windows, const NodeSet& active,
                          const HybridConfig& cfg, RngStream& rng, const SlotOptions& options) {
  cfg.validate();
  if (windows.size() != agent.group_count()) {
    throw std::invalid_argument("run_slot: one window per agent group required");
  }
  HybridSlotResult res;

  // (1) predictions, one subset per group
  res.actions.reserve(agent.group_count());
  std::vector<NodeSet> chosen(agent.group_count());
  for (std::size_t g = 0; g < agent.group_count(); ++g) {
    const std::size_t a = agent.act(g, windows[g], options.epsilon, rng);
    res.actions.push_back(a);
    chosen[g] = agent.subset_nodes(g, a);
    res.predicted.insert(res.predicted.end(), chosen[g].begin(), chosen[g].end());
  }
  res.predicted = make_node_set(std::move(res.predicted));

  // (2) DRL-stage grants
  SlotOutcome& out = res.outcome;
  if (res.predicted.size() <= cfg.n_drl) {
    out.drl_granted = res.predicted;
  } else {
    for (std::size_t idx : sample_without_replacement(res.predicted.size(), cfg.n_drl, rng)) {
      out.drl_granted.push_back(res.predicted[idx]);
    }
  }

  // (3) granted active nodes deliver, granted inactive nodes waste their RB
  out.drl_delivered = set_intersection(out.drl_granted, active);
  out.wasted_rbs = out.drl_granted.size() - out.drl_delivered.size();

  // (4) every active node without a grant falls back to random access
  const NodeSet contenders = set_difference(active, out.drl_granted);
  SlotOutcome ra_part =
      ra::simulate_ra_contention(contenders, ra::RaConfig{cfg.m_sequences, cfg.n_ra()}, rng);
  out.ra_attempted = std::move(ra_part.ra_attempted);
  out.ra_collided = std::move(ra_part.ra_collided);
  out.ra_delivered = std::move(ra_part.ra_delivered);

  // (5) next state from what the AP observed, (6) per-group reward
  res.observed =
      options.ground_truth_state ? active : set_union(out.drl_delivered, out.ra_detected());
  res.windows = windows;
  res.group_rewards.reserve(agent.group_count());
  for (std::size_t g = 0; g < agent.group_count(); ++g) {
    const double r = agent::reward(chosen[g], res.observed, agent.group(g));
    res.group_rewards.push_back(r);
    res.reward += r;
    res.windows[g].push(agent.group_flags(g, res.observed));
  }
  return res;
}

HybridRun run_hybrid(agent::EnsembleAgent& agent, const ActivityTrace& trace, std::size_t begin,
                     std::size_t end, const HybridConfig& cfg,
                     std::vector<agent::StateWindow>& windows, const RunControl& control,
                     RngStream& rng) {
  if (begin > end || end > trace.t_slots()) {
    throw std::out_of_range("run_hybrid: bad slot range");
  }
  if (trace.k_nodes() != agent.k_nodes()) {
    throw std::invalid_argument("run_hybrid: trace and agent disagree on K");
  }
  HybridRun run;
  run.outcomes.reserve(end - begin);
  run.rewards.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    const NodeSet active = trace.active_set(t);
    SlotOptions options;
    options.epsilon = control.learn ? agent.epsilon().value : 0.0;
    options.ground_truth_state = control.ground_truth_state;
    HybridSlotResult res = run_slot(agent, windows, active, cfg, rng, options);
    if (control.learn) {
      for (std::size_t g = 0; g < agent.group_count(); ++g) {
        agent.remember(g, agent::Experience{windows[g], res.actions[g], res.group_rewards[g],
                                            res.windows[g]});
        const double loss = agent.learn(g, rng);
        if (loss >= 0.0) {
          run.last_loss = loss;
        }
      }
      agent.decay_epsilon();
    }
    windows = std::move(res.windows);
    res.outcome.slot = t;
    run.outcomes.push_back(std::move(res.outcome));
    run.rewards.push_back(res.reward);
    run.predicted.push_back(std::move(res.predicted));
  }
  return run;
}

// --- combinatorics ----------------------------------------------------------

std::optional<uint128> binom_exact(std::size_t x, std::size_t y) {
  if (y > x) {
    return 0;
  }
  y = std::min(y, x - y);
  const uint128 max = ~uint128{0};
  uint128 r = 1;
  for (std::size_t i = 0; i < y; ++i) {
    // r = C(x, i); r * (x - i) = C(x, i + 1) * (i + 1), so the division is exact.
    const uint128 factor = x - i;
    if (r > max / factor) {
      return std::nullopt;
    }
    r = r * factor / (i + 1);
  }
  return r;
}

namespace {

constexpr std::size_t kExtendedPrecisionLimit = 500;

long double log_binom(std::size_t x, std::size_t y) {
  return std::lgamma(static_cast<long double>(x) + 1.0L) -
         std::lgamma(static_cast<long double>(y) + 1.0L) -
         std::lgamma(static_cast<long double>(x - y) + 1.0L);
}

std::size_t round_count(double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    return 0;
  }
  return static_cast<std::size_t>(std::llround(v));
}

} // namespace

long double binom(std::size_t x, std::size_t y) {
  if (y > x) {
    return 0.0L;
  }
  if (auto exact = binom_exact(x, y)) {
    return static_cast<long double>(*exact);
  }
  if (x > kExtendedPrecisionLimit) {
    return std::exp(log_binom(x, y));
  }
  y = std::min(y, x - y);
  long double r = 1.0L;
  for (std::size_t i = 0; i < y; ++i) {
    r = r * static_cast<long double>(x - i) / static_cast<long double>(i + 1);
  }
  return r;
}

double grant_split_probability(std::size_t k_cor, std::size_t k_mis, std::size_t n_grants,
                               std::size_t j) {
  const std::size_t total = k_cor + k_mis;
  if (n_grants > total || j > k_cor || j > n_grants || n_grants - j > k_mis) {
    return 0.0;
  }
  if (total > kExtendedPrecisionLimit) {
    return static_cast<double>(std::exp(log_binom(k_cor, j) + log_binom(k_mis, n_grants - j) -
                                        log_binom(total, n_grants)));
  }
  return static_cast<double>(binom(k_cor, j) * binom(k_mis, n_grants - j) /
                             binom(total, n_grants));
}

double noRB_expected(std::size_t k_cor, std::size_t k_mis, std::size_t n_drl) {
  const std::size_t predicted = k_cor + k_mis;
  if (predicted == 0 || n_drl >= predicted) {
    return 0.0;
  }
  // Fewest correct nodes that can be granted: all N1 RBs would otherwise have
  // to go to more mispredicted nodes than exist.
  const std::size_t fewest = k_mis < n_drl ? n_drl - k_mis : 0;
  // Most correct nodes that can be granted.
  const std::size_t most = std::min(k_cor, n_drl);
  double expected = 0.0;
  for (std::size_t j = fewest; j <= most; ++j) {
    expected += static_cast<double>(k_cor - j) * grant_split_probability(k_cor, k_mis, n_drl, j);
  }
  return expected;
}

double noRB_expected(double k_cor, double k_mis, std::size_t n_drl) {
  return noRB_expected(round_count(k_cor), round_count(k_mis), n_drl);
}

double noRB_closed_form(double k_cor, double k_mis, std::size_t n_drl) {
  const double predicted = k_cor + k_mis;
  if (!(predicted > 0.0)) {
    return 0.0;
  }
  return k_cor * std::max(0.0, 1.0 - static_cast<double>(n_drl) / predicted);
}

std::vector<StageTerms> analytic_hybrid_terms(std::span<const EpsilonStats> stats,
                                              const HybridConfig& cfg, std::size_t k_nodes,
                                              ra::RateMode mode) {
  cfg.validate();
  if (k_nodes == 0) {
    throw std::invalid_argument("analytic_hybrid_rate: K must be positive");
  }
  const double k = static_cast<double>(k_nodes);
  const std::size_t n_ra = cfg.n_ra();
  std::map<std::size_t, double> capped;
  auto ra_expect = [&](std::size_t n) {
    auto it = capped.find(n);
    if (it == capped.end()) {
      it = capped.emplace(n, ra::expected_capped_singletons(n, cfg.m_sequences, n_ra)).first;
    }
    return it->second;
  };

  std::vector<StageTerms> out;
  out.reserve(stats.size());
  for (const EpsilonStats& s : stats) {
    const std::size_t cor = round_count(s.k_cor_active);
    const std::size_t mis = round_count(s.k_mis_active);
    StageTerms terms;
    if (mode == ra::RateMode::verbatim) {
      const double fallback = std::max(0.0, s.k_mis_inactive) + noRB_expected(cor, mis, cfg.n_drl);
      terms.ra = ra::verbatim_slot_term(fallback, cfg.m_sequences, n_ra) / k;
    } else {
      const std::size_t missed = round_count(s.k_mis_inactive);
      const std::size_t grants = std::min(cfg.n_drl, cor + mis);
      const std::size_t fewest = grants > mis ? grants - mis : 0;
      const std::size_t most = std::min(cor, grants);
      for (std::size_t j = fewest; j <= most; ++j) {
        const double p = grants == cor + mis ? (j == cor ? 1.0 : 0.0)
                                             : grant_split_probability(cor, mis, grants, j);
        if (p == 0.0) {
          continue;
        }
        terms.drl += p * static_cast<double>(j);
        terms.ra += p * ra_expect(missed + cor - j);
      }
      terms.drl /= k;
      terms.ra /= k;
    }
    out.push_back(terms);
  }
  return out;
}

RateSeries analytic_hybrid_rate(std::span<const EpsilonStats> stats, const HybridConfig& cfg,
                                std::size_t k_nodes, ra::RateMode mode) {
  const auto terms = analytic_hybrid_terms(stats, cfg, k_nodes, mode);
  std::vector<double> per_slot;
  per_slot.reserve(terms.size());
  for (const auto& t : terms) {
    per_slot.push_back(t.drl + t.ra);
  }
  return RateSeries(std::move(per_slot));
}

std::vector<EpsilonStats> estimate_eps_stats(const agent::EnsembleAgent& agent,
                                             const ActivityTrace& trace, const HybridConfig& cfg,
                                             RngStream& rng) {
  std::vector<agent::StateWindow> windows = agent.empty_windows();
  std::vector<EpsilonStats> stats;
  stats.reserve(trace.t_slots());
  for (std::size_t t = 0; t < trace.t_slots(); ++t) {
    const NodeSet active = trace.active_set(t);
    HybridSlotResult res = run_slot(agent, windows, active, cfg, rng);
    EpsilonStats s;
    s.k_active = static_cast<double>(res.predicted.size());
    s.k_cor_active = static_cast<double>(set_intersection(res.predicted, active).size());
    s.k_mis_active = s.k_active - s.k_cor_active;
    s.k_mis_inactive = static_cast<double>(set_difference(active, res.predicted).size());
    stats.push_back(s);
    windows = std::move(res.windows);
  }
  return stats;
}

std::size_t select_n1(std::span<const EpsilonStats> stats, std::size_t n_total,
                      std::size_t m_sequences, std::size_t k_nodes) {
  std::size_t best_n1 = 0;
  double best = -1.0;
  for (std::size_t n1 = 0; n1 <= n_total; ++n1) {
    const double rate = analytic_hybrid_rate(stats, HybridConfig{n_total, n1, m_sequences},
                                             k_nodes, ra::RateMode::simulation_consistent)
                            .mean();
    // Differences at rounding level are ties; keep the smaller N1.
    if (rate > best + 1e-12 * std::max(1.0, std::abs(best))) {
      best = rate;
      best_n1 = n1;
    }
  }
  return best_n1;
}

void write_slot_results(std::ostream& out, std::span<const SlotOutcome> outcomes,
                        std::span<const double> rewards) {
  if (rewards.size() != outcomes.size()) {
    throw std::invalid_argument("write_slot_results: one reward per slot required");
  }
  out << "slot,drl_granted,drl_delivered,wasted,ra_attempted,ra_collided,ra_delivered,reward\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const SlotOutcome& o = outcomes[i];
    out << o.slot << ',' << o.drl_granted.size() << ',' << o.drl_delivered.size() << ','
        << o.wasted_rbs << ',' << o.ra_attempted.size() << ',' << o.ra_collided.size() << ','
        << o.ra_delivered.size() << ',' << format_double(rewards[i]) << '\n';
  }
}

void write_stats_csv(std::ostream& out, std::span<const EpsilonStats> stats) {
  out << "slot,k_active,k_cor_active,k_mis_active,k_mis_inactive\n";
  for (std::size_t t = 0; t < stats.size(); ++t) {
    const EpsilonStats& s = stats[t];
    out << t << ',' << format_double(s.k_active) << ',' << format_double(s.k_cor_active) << ','
        << format_double(s.k_mis_active) << ',' << format_double(s.k_mis_inactive) << '\n';
  }
}

std::vector<EpsilonStats> read_stats_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw ParseError("empty stats file", 0);
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  if (line != "slot,k_active,k_cor_active,k_mis_active,k_mis_inactive") {
    throw ParseError("expected header 'slot,k_active,k_cor_active,k_mis_active,k_mis_inactive'",
                     line_no);
  }
  std::vector<EpsilonStats> stats;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    double fields[5];
    std::size_t start = 0;
    for (int f = 0; f < 5; ++f) {
      const std::size_t stop = f < 4 ? line.find(',', start) : line.size();
      if (stop == std::string::npos) {
        throw ParseError("expected 5 fields", line_no);
      }
      auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + stop, fields[f]);
      if (ec != std::errc() || ptr != line.data() + stop || !std::isfinite(fields[f]) ||
          fields[f] < 0.0) {
        throw ParseError("field " + std::to_string(f + 1) + " is not a nonnegative number",
                         line_no);
      }
      start = stop + 1;
    }
    EpsilonStats s{fields[1], fields[2], fields[3], fields[4]};
    if (std::abs(s.k_cor_active + s.k_mis_active - s.k_active) > 1e-9) {
      throw ParseError("k_cor_active + k_mis_active must equal k_active", line_no);
    }
    stats.push_back(s);
  }
  return stats;
}

} // namespace drlra::hybrid
