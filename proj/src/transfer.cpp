#include "drlra/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "drlra/activity.hpp"
#include "drlra/experiment.hpp"

namespace drlra::harness {

std::size_t plateau_point(std::span<const std::size_t> slots, std::span<const double> rewards,
                          double tolerance, double tail) {
  if (slots.empty() || slots.size() != rewards.size()) {
    throw std::invalid_argument("plateau_point: need matching, nonempty checkpoints");
  }
  const double last = static_cast<double>(slots.back());
  const double tail_start = last - tail * last;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (static_cast<double>(slots[i]) >= tail_start) {
      sum += rewards[i];
      ++n;
    }
  }
  const double level = sum / static_cast<double>(n);
  const double band = tolerance * std::abs(level);
  std::size_t first = slots.size() - 1;
  for (std::size_t i = slots.size(); i-- > 0;) {
    if (std::abs(rewards[i] - level) > band) {
      break;
    }
    first = i;
  }
  return slots[first];
}

double heldout_reward(const agent::EnsembleAgent& agent, const ActivityTrace& trace,
                      std::size_t begin, std::size_t end, const hybrid::HybridConfig& cfg,
                      RngStream rng) {
  agent::EnsembleAgent copy = agent;
  std::vector<agent::StateWindow> windows = copy.empty_windows();
  const hybrid::HybridRun run = hybrid::run_hybrid(copy, trace, begin, end, cfg, windows, {}, rng);
  double total = 0.0;
  for (double r : run.rewards) {
    total += r;
  }
  return total / (static_cast<double>(end - begin) * static_cast<double>(trace.k_nodes()));
}

namespace {

struct SeedSetup {
  ActivityTrace live;
  std::size_t budget = 0;
  std::size_t heldout_begin = 0;
  RngStream base;
};

SeedSetup setup_seed(const ExperimentConfig& cfg, const TransferSpec& spec, std::uint64_t seed) {
  SeedSetup s;
  s.base = RngStream(seed).derive("transfer");
  ExperimentConfig live_cfg = cfg;
  live_cfg.t_slots = spec.control_budget + spec.heldout_slots;
  RngStream trace_rng = s.base.derive("live-trace");
  s.live = make_trace(live_cfg, trace_rng);
  if (s.live.t_slots() <= spec.heldout_slots) {
    throw std::invalid_argument(cfg.name + ": live trace shorter than the held-out segment");
  }
  s.heldout_begin = s.live.t_slots() - spec.heldout_slots;
  s.budget = std::min(spec.control_budget, s.heldout_begin);
  return s;
}

/// Trains `agent` on live slots [0, slots) with fresh windows.
void train_live(agent::EnsembleAgent& agent, const SeedSetup& s, std::size_t slots,
                const hybrid::HybridConfig& hcfg, bool ground_truth, RngStream& rng) {
  std::vector<agent::StateWindow> windows = agent.empty_windows();
  hybrid::run_hybrid(agent, s.live, 0, slots, hcfg, windows, {true, ground_truth}, rng);
}

} // namespace

TransferResult run_transfer(const ExperimentConfig& cfg, const TransferSpec& spec) {
  cfg.validate();
  spec.validate();
  if (!cfg.n_drl) {
    throw std::invalid_argument(cfg.name + ": transfer needs a fixed n1");
  }
  const hybrid::HybridConfig hcfg{cfg.n_total, *cfg.n_drl, cfg.m_sequences};
  const std::size_t n_seeds = cfg.seeds.size();
  const bool gt = cfg.ground_truth_state;

  std::vector<SeedSetup> setups(n_seeds);
  run_jobs(n_seeds, cfg.threads,
           [&](std::size_t i) { setups[i] = setup_seed(cfg, spec, cfg.seeds[i]); });
  const std::size_t budget =
      std::min_element(setups.begin(), setups.end(), [](const SeedSetup& a, const SeedSetup& b) {
        return a.budget < b.budget;
      })->budget;

  TransferResult result;

  // Control curve: live-only training with periodic held-out checkpoints.
  if (!spec.sufficient_slots) {
    for (std::size_t c = 0;; c += spec.checkpoint_every) {
      result.checkpoint_slots.push_back(std::min(c, budget));
      if (c >= budget) {
        break;
      }
    }
    std::vector<std::vector<double>> curves(n_seeds);
    run_jobs(n_seeds, cfg.threads, [&](std::size_t i) {
      const SeedSetup& s = setups[i];
      agent::EnsembleAgent agent(s.live.k_nodes(), cfg.agent, s.base.derive("control-init"));
      std::vector<agent::StateWindow> windows = agent.empty_windows();
      RngStream rng = s.base.derive("control-train");
      std::size_t done = 0;
      for (std::size_t c : result.checkpoint_slots) {
        hybrid::run_hybrid(agent, s.live, done, c, hcfg, windows, {true, gt}, rng);
        done = c;
        curves[i].push_back(heldout_reward(agent, s.live, s.heldout_begin, s.live.t_slots(), hcfg,
                                           s.base.derive("heldout")));
      }
    });
    result.control_curve.assign(result.checkpoint_slots.size(), 0.0);
    for (const auto& curve : curves) {
      for (std::size_t j = 0; j < curve.size(); ++j) {
        result.control_curve[j] += curve[j] / static_cast<double>(n_seeds);
      }
    }
    result.sufficient_slots = std::max<std::size_t>(
        1, plateau_point(result.checkpoint_slots, result.control_curve, spec.plateau_tolerance,
                         spec.plateau_tail));
  } else {
    result.sufficient_slots = std::min(*spec.sufficient_slots, budget);
  }
  const std::size_t sufficient = result.sufficient_slots;

  std::vector<double> fractions = spec.fractions;
  if (std::find(fractions.begin(), fractions.end(), 1.0) == fractions.end()) {
    fractions.push_back(1.0);
  }
  auto live_slots = [&](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(sufficient)));
  };

  std::vector<std::vector<double>> pre(n_seeds), ctl(n_seeds);
  run_jobs(n_seeds, cfg.threads, [&](std::size_t i) {
    const SeedSetup& s = setups[i];
    const std::size_t k = s.live.k_nodes();

    agent::EnsembleAgent pretrained(k, cfg.agent, s.base.derive("pretrain-init"));
    {
      RngStream src_rng = s.base.derive("pretrain-trace");
      const ActivityTrace source = activity::gen_cmmpp(spec.cmmpp, k, spec.pretrain_slots, src_rng);
      std::vector<agent::StateWindow> windows = pretrained.empty_windows();
      RngStream rng = s.base.derive("pretrain-train");
      hybrid::run_hybrid(pretrained, source, 0, source.t_slots(), hcfg, windows, {true, gt}, rng);
    }
    for (double f : fractions) {
      const std::size_t n = live_slots(f);
      // Fine-tuning keeps the exploration rate reached during pretraining but
      // replays live experience only.
      agent::EnsembleAgent tuned = pretrained;
      tuned.clear_replay();
      RngStream tune_rng = s.base.derive("finetune-train");
      train_live(tuned, s, n, hcfg, gt, tune_rng);
      pre[i].push_back(heldout_reward(tuned, s.live, s.heldout_begin, s.live.t_slots(), hcfg,
                                      s.base.derive("heldout")));

      agent::EnsembleAgent control(k, cfg.agent, s.base.derive("control-init"));
      RngStream ctl_rng = s.base.derive("control-train");
      train_live(control, s, n, hcfg, gt, ctl_rng);
      ctl[i].push_back(heldout_reward(control, s.live, s.heldout_begin, s.live.t_slots(), hcfg,
                                      s.base.derive("heldout")));
    }
  });

  const auto ref_it = std::find(fractions.begin(), fractions.end(), 1.0);
  const auto ref_index = static_cast<std::size_t>(ref_it - fractions.begin());
  for (std::size_t i = 0; i < n_seeds; ++i) {
    result.reference_reward += ctl[i][ref_index] / static_cast<double>(n_seeds);
  }
  if (!(result.reference_reward > 0.0)) {
    throw std::runtime_error(cfg.name + ": reference reward is zero, cannot normalise");
  }
  for (std::size_t j = 0; j < spec.fractions.size(); ++j) {
    TransferPoint p;
    p.fraction = fractions[j];
    p.live_slots = live_slots(p.fraction);
    for (std::size_t i = 0; i < n_seeds; ++i) {
      p.pretrained_reward += pre[i][j] / static_cast<double>(n_seeds);
      p.control_reward += ctl[i][j] / static_cast<double>(n_seeds);
    }
    p.pretrained_pct = 100.0 * p.pretrained_reward / result.reference_reward;
    p.control_pct = 100.0 * p.control_reward / result.reference_reward;
    result.points.push_back(p);
  }
  return result;
}

void write_transfer_csv(std::ostream& out, const TransferResult& result) {
  out << "fraction,pretrained_reward_pct,control_reward_pct\n";
  for (const TransferPoint& p : result.points) {
    out << format_double(p.fraction) << ',' << format_double(p.pretrained_pct) << ','
        << format_double(p.control_pct) << '\n';
  }
}

void write_control_curve_csv(std::ostream& out, const TransferResult& result) {
  out << "slot,control_reward\n";
  for (std::size_t i = 0; i < result.checkpoint_slots.size(); ++i) {
    out << result.checkpoint_slots[i] << ',' << format_double(result.control_curve[i]) << '\n';
  }
  out << "sufficient_slots," << result.sufficient_slots << '\n';
}

} // namespace drlra::harness
