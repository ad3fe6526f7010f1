// Acceptance runner: one PASS/FAIL line per criterion.
//
//   drlra_acceptance --configs <dir> --cli <drlra binary> --work <dir> [ids...]
//
// Without ids every criterion runs in order. The exit status is nonzero when
// any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drlra/activity.hpp"
#include "drlra/config.hpp"
#include "drlra/core.hpp"
#include "drlra/experiment.hpp"
#include "drlra/hybrid.hpp"
#include "drlra/qnetwork.hpp"
#include "drlra/ra.hpp"
#include "drlra/rng.hpp"
#include "drlra/transfer.hpp"

namespace fs = std::filesystem;
using namespace drlra;
using namespace drlra::harness;

namespace {

struct Context {
  fs::path configs;
  fs::path cli;
  fs::path work;
};

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok: " : "FAILED: ") + what);
  }
};

struct Criterion {
  std::string id;
  std::string title;
  double budget_s;
  std::function<Verdict(const Context&)> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

fs::path fresh_dir(const Context& ctx, const std::string& name) {
  const fs::path p = ctx.work / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<ExperimentConfig> load_configs(const Context& ctx, const std::string& file,
                                           const fs::path& out) {
  auto cfgs = load_config_file((ctx.configs / file).string());
  for (auto& c : cfgs) {
    c.out_dir = out.string();
  }
  return cfgs;
}

// 1 ------------------------------------------------------------------------

/// Average number of correct nodes left without a grant when `n` grants are
/// spread uniformly over c correct and m mistaken predictions, by listing
/// every grant subset.
double enumerate_no_rb(unsigned c, unsigned m, unsigned n) {
  const unsigned total = c + m;
  if (n >= total) {
    return 0.0;
  }
  const std::uint32_t correct_mask = (1u << c) - 1u;
  double sum = 0.0;
  double count = 0.0;
  for (std::uint32_t s = 0; s < (1u << total); ++s) {
    if (static_cast<unsigned>(__builtin_popcount(s)) != n) {
      continue;
    }
    sum += c - static_cast<unsigned>(__builtin_popcount(s & correct_mask));
    count += 1.0;
  }
  return sum / count;
}

Verdict criterion_norb(const Context&) {
  Verdict v;
  double worst_enum = 0.0;
  double worst_closed = 0.0;
  std::size_t cases = 0;
  for (unsigned c = 0; c <= 12; ++c) {
    for (unsigned m = 0; c + m <= 12; ++m) {
      for (unsigned n = 0; n <= 13; ++n) {
        const double lib = hybrid::noRB_expected(std::size_t{c}, std::size_t{m}, std::size_t{n});
        const double oracle = enumerate_no_rb(c, m, n);
        const double closed =
            c + m == 0 ? 0.0 : c * std::max(0.0, 1.0 - static_cast<double>(n) / (c + m));
        worst_enum = std::max(worst_enum, std::abs(lib - oracle));
        worst_closed = std::max(worst_closed, std::abs(lib - closed));
        ++cases;
      }
    }
  }
  // Larger inputs against the closed form only.
  RngStream rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t c = rng.uniform_index(400);
    const std::size_t m = rng.uniform_index(400);
    const std::size_t n = rng.uniform_index(c + m + 10);
    const double lib = hybrid::noRB_expected(c, m, n);
    const double closed =
        c + m == 0 ? 0.0
                   : static_cast<double>(c) *
                         std::max(0.0, 1.0 - static_cast<double>(n) / static_cast<double>(c + m));
    worst_closed = std::max(worst_closed, std::abs(lib - closed));
    ++cases;
  }
  v.require(worst_enum <= 1e-9, "max |lib - enumeration| = " + fmt(worst_enum) + " (<= 1e-9)");
  v.require(worst_closed <= 1e-9, "max |lib - closed form| = " + fmt(worst_closed) + " over " +
                                      std::to_string(cases) + " inputs (<= 1e-9)");
  return v;
}

// 2 ------------------------------------------------------------------------

/// P(U = u) for U the number of sequences picked by exactly one of n
/// contenders, by a dynamic program over the M sequences and the multinomial
/// occupancy counts.
std::vector<double> occupancy_singletons(std::size_t n, std::size_t m) {
  // f[r][u]: sum over occupancy prefixes of prod 1/c_j!, r nodes placed, u singletons.
  std::vector<double> inv_fact(n + 1, 1.0);
  for (std::size_t c = 1; c <= n; ++c) {
    inv_fact[c] = inv_fact[c - 1] / static_cast<double>(c);
  }
  std::vector<std::vector<double>> f(n + 1, std::vector<double>(n + 1, 0.0));
  f[0][0] = 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<std::vector<double>> g(n + 1, std::vector<double>(n + 1, 0.0));
    for (std::size_t r = 0; r <= n; ++r) {
      for (std::size_t u = 0; u <= std::min(r, j); ++u) {
        if (f[r][u] == 0.0) {
          continue;
        }
        for (std::size_t c = 0; r + c <= n; ++c) {
          g[r + c][u + (c == 1 ? 1 : 0)] += f[r][u] * inv_fact[c];
        }
      }
    }
    f = std::move(g);
  }
  // Multiply by n! / M^n.
  double scale = 1.0;
  for (std::size_t i = 1; i <= n; ++i) {
    scale *= static_cast<double>(i) / static_cast<double>(m);
  }
  std::vector<double> p(n + 1);
  for (std::size_t u = 0; u <= n; ++u) {
    p[u] = f[n][u] * scale;
  }
  return p;
}

Verdict criterion_ra(const Context&) {
  Verdict v;
  constexpr std::size_t slots = 100000;
  std::size_t points = 0;
  std::size_t bad = 0;
  double worst_z = 0.0;
  double worst_oracle = 0.0;
  std::string first_bad;
  for (std::size_t m : {std::size_t{2}, std::size_t{54}}) {
    std::vector<std::vector<double>> dist(51);
    for (std::size_t ka = 1; ka <= 50; ++ka) {
      dist[ka] = occupancy_singletons(ka, m);
    }
    for (std::size_t n_rbs : {std::size_t{1}, std::size_t{10}}) {
      const ra::RaConfig cfg{m, n_rbs};
      for (std::size_t ka = 1; ka <= 50; ++ka) {
        NodeSet active;
        for (std::size_t k = 0; k < ka; ++k) {
          active.emplace_back(k);
        }
        RngStream rng = RngStream(7).derive(m * 1000 + n_rbs * 100 + ka);
        double sum = 0.0;
        for (std::size_t t = 0; t < slots; ++t) {
          sum += static_cast<double>(
              ra::simulate_ra_contention(active, cfg, rng).ra_delivered.size());
        }
        const double k = static_cast<double>(ka);
        const double mc = sum / static_cast<double>(slots) / k;
        // Standard error of the Monte Carlo mean from the exact per-slot
        // distribution; the sample estimate degenerates to 0 when success is
        // almost never or almost always seen.
        double mean = 0.0;
        double second = 0.0;
        for (std::size_t u = 0; u < dist[ka].size(); ++u) {
          const double r = static_cast<double>(std::min(u, n_rbs)) / k;
          mean += dist[ka][u] * r;
          second += dist[ka][u] * r * r;
        }
        const double se = std::sqrt(std::max(0.0, second - mean * mean) / slots);
        const std::size_t counts[] = {ka};
        const double analytic =
            ra::analytic_ra_rate(counts, cfg, ka, ra::RateMode::simulation_consistent).mean();
        worst_oracle = std::max(worst_oracle, std::abs(analytic - mean));
        const double diff = std::abs(analytic - mc);
        // A deterministic point (se = 0) must match up to rounding.
        const bool ok = diff <= 3.0 * se + 1e-12;
        if (se > 0.0) {
          worst_z = std::max(worst_z, diff / se);
        }
        if (!ok) {
          ++bad;
          if (first_bad.empty()) {
            first_bad = "M=" + std::to_string(m) + " N=" + std::to_string(n_rbs) +
                        " Ka=" + std::to_string(ka) + " analytic " + fmt(analytic, 6) + " mc " +
                        fmt(mc, 6) + " se " + fmt(se, 3);
          }
        }
        ++points;
      }
    }
  }
  v.notes.push_back("info: max |analytic - occupancy oracle mean| = " + fmt(worst_oracle, 3));
  v.require(bad == 0, std::to_string(points - bad) + "/" + std::to_string(points) +
                          " grid points within 3 SE, worst |z| = " + fmt(worst_z, 3) +
                          (first_bad.empty() ? "" : "; first miss " + first_bad));
  return v;
}

// 3 ------------------------------------------------------------------------

/// Forward pass and loss written out from the flat parameter layout, without
/// the library's forward code.
double reference_loss(const std::vector<std::size_t>& sizes, const std::vector<double>& theta,
                      const Eigen::MatrixXd& x, const std::vector<std::size_t>& actions,
                      const std::vector<double>& targets) {
  const std::size_t layers = sizes.size() - 1;
  std::vector<std::size_t> w_off(layers), b_off(layers);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    w_off[l] = pos;
    pos += sizes[l] * sizes[l + 1];
    b_off[l] = pos;
    pos += sizes[l + 1];
  }
  double loss = 0.0;
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    std::vector<double> h(x.col(b).data(), x.col(b).data() + x.rows());
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<double> z(sizes[l + 1]);
      for (std::size_t o = 0; o < sizes[l + 1]; ++o) {
        double acc = theta[b_off[l] + o];
        for (std::size_t i = 0; i < sizes[l]; ++i) {
          acc += theta[w_off[l] + o * sizes[l] + i] * h[i];
        }
        z[o] = l + 1 < layers ? std::max(0.0, acc) : acc;
      }
      h = std::move(z);
    }
    const double e = targets[static_cast<std::size_t>(b)] - h[actions[static_cast<std::size_t>(b)]];
    loss += e * e;
  }
  return loss / static_cast<double>(x.cols());
}

Verdict criterion_gradients(const Context&) {
  Verdict v;
  RngStream rng(31337);
  constexpr double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t max_params = 0;
  for (int net_index = 0; net_index < 20; ++net_index) {
    std::vector<std::size_t> sizes;
    std::size_t count = 0;
    do {
      sizes.assign({2 + rng.uniform_index(6)});
      const std::size_t hidden = 1 + rng.uniform_index(3);
      for (std::size_t l = 0; l < hidden; ++l) {
        sizes.push_back(2 + rng.uniform_index(8));
      }
      sizes.push_back(2 + rng.uniform_index(5));
      count = 0;
      for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        count += sizes[l] * sizes[l + 1] + sizes[l + 1];
      }
    } while (count > 200);
    max_params = std::max(max_params, count);

    agent::QNetwork net(sizes);
    std::vector<double> theta(net.parameter_count());
    for (double& p : theta) {
      p = 2.0 * rng.uniform() - 1.0;
    }
    net.set_flat_parameters(theta);
    const std::size_t batch = 1 + rng.uniform_index(6);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(sizes.front()), static_cast<Eigen::Index>(batch));
    std::vector<std::size_t> actions(batch);
    std::vector<double> targets(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        x(r, static_cast<Eigen::Index>(b)) = 2.0 * rng.uniform() - 1.0;
      }
      actions[b] = rng.uniform_index(sizes.back());
      targets[b] = 4.0 * rng.uniform() - 2.0;
    }
    const std::vector<double> analytic = agent::loss_gradient(net, x, actions, targets).flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      std::vector<double> p = theta;
      p[i] = theta[i] + h;
      const double up = reference_loss(sizes, p, x, actions, targets);
      p[i] = theta[i] - h;
      const double down = reference_loss(sizes, p, x, actions, targets);
      const double numeric = (up - down) / (2.0 * h);
      // Floor keeps exactly-zero gradients (dead units) from dividing by 0.
      const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
      ++checked;
    }
  }
  v.require(worst <= 1e-4, "worst relative error " + fmt(worst, 3) + " over " +
                               std::to_string(checked) + " parameters, largest net " +
                               std::to_string(max_params) + " params (<= 1e-4)");
  return v;
}

// Helpers for the trend criteria ----------------------------------------------

void require_clean(Verdict& v, const ExperimentResult& r, const std::string& label) {
  std::size_t violations = 0;
  std::size_t failed = 0;
  bool genie_ok = true;
  for (const AggregateRow& row : r.rows) {
    violations += row.violations;
    failed += row.seeds_failed;
    genie_ok = genie_ok && row.genie_rate >= row.hybrid_rate && row.genie_rate >= row.ra_rate;
  }
  v.notes.push_back("info: " + label + " invariant violations " + std::to_string(violations) +
                    ", failed seeds " + std::to_string(failed) +
                    (genie_ok ? ", genie bounds both schemes" : ", genie bound broken"));
}

/// Largest rise of a sequence: max over i < j of values[j] - values[i].
double largest_rise(const std::vector<double>& values) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      worst = std::max(worst, values[j] - values[i]);
    }
  }
  return worst;
}

std::string series(const std::vector<AggregateRow>& rows, double AggregateRow::*field) {
  std::string s;
  for (const AggregateRow& r : rows) {
    s += (s.empty() ? "" : " ") + fmt(r.key) + ":" + fmt(r.*field, 3);
  }
  return s;
}

std::vector<double> column(const std::vector<AggregateRow>& rows, double AggregateRow::*field) {
  std::vector<double> out;
  for (const AggregateRow& r : rows) {
    out.push_back(r.*field);
  }
  return out;
}

const AggregateRow& row_at(const std::vector<AggregateRow>& rows, double key) {
  for (const AggregateRow& r : rows) {
    if (std::abs(r.key - key) < 1e-9) {
      return r;
    }
  }
  throw std::runtime_error("no row for key " + fmt(key));
}

std::size_t min_seeds(const ExperimentResult& r) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const AggregateRow& row : r.rows) {
    n = std::min(n, row.seeds_ok);
  }
  return n;
}

// 4 ------------------------------------------------------------------------

Verdict criterion_fig2(const Context& ctx) {
  Verdict v;
  const fs::path out = fresh_dir(ctx, "fig2");
  const ExperimentConfig cfg = load_configs(ctx, "fig2.cfg", out).front();
  const ExperimentResult r = run_experiment(cfg);
  const auto ra = column(r.rows, &AggregateRow::ra_rate);
  const auto hy = column(r.rows, &AggregateRow::hybrid_rate);
  v.notes.push_back("info: ra     " + series(r.rows, &AggregateRow::ra_rate));
  v.notes.push_back("info: hybrid " + series(r.rows, &AggregateRow::hybrid_rate));
  v.notes.push_back("info: genie  " + series(r.rows, &AggregateRow::genie_rate));
  std::string n1s;
  for (const AggregateRow& row : r.rows) {
    n1s += (n1s.empty() ? "" : " ") + fmt(row.key) + ":" + std::to_string(row.n1);
  }
  v.notes.push_back("info: n1     " + n1s);
  v.require(min_seeds(r) >= 10, "successful seeds per point " + std::to_string(min_seeds(r)) +
                                    " (>= 10)");
  const double spread = *std::max_element(ra.begin(), ra.end()) -
                        *std::min_element(ra.begin(), ra.end());
  v.require(spread <= 0.03, "(a) RA spread across delta " + fmt(spread, 3) + " (<= 0.03)");
  const double rise = largest_rise(hy);
  v.require(rise <= 0.03, "(b) largest hybrid rise with delta " + fmt(rise, 3) + " (<= 0.03)");
  const AggregateRow& lo = row_at(r.rows, 0.1);
  const AggregateRow& hi = row_at(r.rows, 0.9);
  v.require(lo.hybrid_rate - lo.ra_rate >= 0.10,
            "(c) hybrid - RA at delta 0.1 = " + fmt(lo.hybrid_rate - lo.ra_rate, 3) + " (>= 0.10)");
  v.require(std::abs(hi.hybrid_rate - hi.ra_rate) <= 0.05,
            "(d) |hybrid - RA| at delta 0.9 = " + fmt(std::abs(hi.hybrid_rate - hi.ra_rate), 3) +
                " (<= 0.05)");
  require_clean(v, r, "fig2");
  return v;
}

// 5 ------------------------------------------------------------------------

Verdict criterion_fig3(const Context& ctx) {
  Verdict v;
  const fs::path out = fresh_dir(ctx, "fig3");
  const auto cfgs = load_configs(ctx, "fig3.cfg", out);
  const ExperimentResult* low = nullptr;
  std::vector<ExperimentResult> results;
  results.reserve(cfgs.size());
  for (const ExperimentConfig& cfg : cfgs) {
    results.push_back(run_experiment(cfg));
    const ExperimentResult& r = results.back();
    const std::string tag = cfg.name + " (delta " + fmt(cfg.traffic.delta) + ", n1 " +
                            std::to_string(cfg.n_drl.value_or(0)) + ")";
    v.notes.push_back("info: " + tag + " ra     " + series(r.rows, &AggregateRow::ra_rate));
    v.notes.push_back("info: " + tag + " hybrid " + series(r.rows, &AggregateRow::hybrid_rate));
    v.require(min_seeds(r) >= 10,
              tag + " successful seeds per point " + std::to_string(min_seeds(r)) + " (>= 10)");
    const double ra_rise = largest_rise(column(r.rows, &AggregateRow::ra_rate));
    const double hy_rise = largest_rise(column(r.rows, &AggregateRow::hybrid_rate));
    v.require(ra_rise <= 0.03, tag + " largest RA rise with K " + fmt(ra_rise, 3) + " (<= 0.03)");
    v.require(hy_rise <= 0.03,
              tag + " largest hybrid rise with K " + fmt(hy_rise, 3) + " (<= 0.03)");
    require_clean(v, r, cfg.name);
    if (std::abs(cfg.traffic.delta - 0.3) < 1e-9) {
      low = &r;
    }
  }
  if (low == nullptr) {
    v.require(false, "fig3.cfg has no delta = 0.3 section");
    return v;
  }
  const double h100 = row_at(low->rows, 100).hybrid_rate;
  const double r50 = row_at(low->rows, 50).ra_rate;
  v.require(h100 >= r50 - 0.05, "delta 0.3: hybrid at K=100 " + fmt(h100, 3) + " vs RA at K=50 " +
                                    fmt(r50, 3) + " (needs >= RA - 0.05)");
  return v;
}

// 6 ------------------------------------------------------------------------

Verdict criterion_transfer(const Context& ctx) {
  Verdict v;
  const fs::path out = fresh_dir(ctx, "fig5");
  const ExperimentConfig cfg = load_configs(ctx, "fig5_transfer.cfg", out).front();
  const TransferResult r = run_transfer(cfg, cfg.transfer);
  {
    std::ofstream f(out / (cfg.name + ".csv"));
    write_transfer_csv(f, r);
    std::ofstream c(out / (cfg.name + "_control_curve.csv"));
    write_control_curve_csv(c, r);
  }
  std::string curve;
  for (const TransferPoint& p : r.points) {
    curve += (curve.empty() ? "" : " ") + fmt(p.fraction) + ":" + fmt(p.pretrained_pct, 4) + "/" +
             fmt(p.control_pct, 4);
  }
  v.notes.push_back("info: sufficient slots " + std::to_string(r.sufficient_slots) +
                    ", fraction:pretrained%/control% " + curve);
  v.require(cfg.seeds.size() >= 5, "seeds " + std::to_string(cfg.seeds.size()) + " (>= 5)");
  auto at = [&](double f) -> const TransferPoint& {
    for (const TransferPoint& p : r.points) {
      if (std::abs(p.fraction - f) < 1e-9) {
        return p;
      }
    }
    throw std::runtime_error("transfer grid lacks fraction " + fmt(f));
  };
  const TransferPoint& zero = at(0.0);
  const TransferPoint& fifth = at(0.2);
  v.require(fifth.pretrained_pct >= 90.0,
            "pretrained at 20% live " + fmt(fifth.pretrained_pct) + "% (>= 90%)");
  v.require(zero.pretrained_pct < 95.0,
            "pretrained at 0% live " + fmt(zero.pretrained_pct) + "% (< 95%)");
  v.require(fifth.control_pct < fifth.pretrained_pct,
            "control at 20% live " + fmt(fifth.control_pct) + "% (< pretrained " +
                fmt(fifth.pretrained_pct) + "%)");
  return v;
}

// 7 ------------------------------------------------------------------------

/// Slot-level protocol checks written against the raw outcome sets.
std::size_t audit_point(const PointRun& run, const ExperimentConfig& cfg, std::string* first) {
  const std::size_t n = cfg.n_total;
  const std::size_t n1 = run.summary.n1;
  const std::size_t n2 = n - n1;
  const ActivityTrace& trace = run.eval_trace;
  std::size_t bad = 0;
  auto fail = [&](std::size_t t, const std::string& what) {
    if (bad++ == 0 && first != nullptr) {
      *first = "slot " + std::to_string(t) + ": " + what;
    }
  };
  for (std::size_t t = 0; t < trace.t_slots(); ++t) {
    const NodeSet active = trace.active_set(t);
    const std::size_t bound = std::min(active.size(), n);
    const SlotOutcome& h = run.hybrid.at(t);
    const NodeSet detected = set_difference(h.ra_attempted, h.ra_collided);
    if (h.drl_granted.size() > n1) fail(t, "more DRL grants than N1");
    if (h.drl_delivered != set_intersection(h.drl_granted, active)) fail(t, "DRL delivery set");
    if (h.wasted_rbs != h.drl_granted.size() - h.drl_delivered.size()) fail(t, "wasted RB count");
    if (h.ra_attempted != set_difference(active, h.drl_granted)) fail(t, "RA contenders");
    if (!is_subset(h.ra_delivered, detected)) fail(t, "RA delivery without unique sequence");
    if (h.ra_delivered.size() != std::min(detected.size(), n2)) fail(t, "RA grants != min(U, N2)");
    if (h.drl_granted.size() + h.ra_delivered.size() > n) fail(t, "RB conservation");
    if (h.drl_delivered.size() + h.ra_delivered.size() > bound) fail(t, "hybrid above genie");

    const SlotOutcome& r = run.ra.at(t);
    const NodeSet r_detected = set_difference(r.ra_attempted, r.ra_collided);
    if (r.ra_attempted != active) fail(t, "RA scheme contenders");
    if (!r.drl_granted.empty()) fail(t, "RA scheme has DRL grants");
    if (r.ra_delivered.size() != std::min(r_detected.size(), n)) fail(t, "RA scheme grants");
    if (r.ra_delivered.size() > bound) fail(t, "RA above genie");
  }
  return bad;
}

ExperimentConfig invariant_base() {
  ExperimentConfig c;
  c.name = "invariants";
  c.kind = ExperimentKind::custom;
  c.k_nodes = 20;
  c.n_total = 10;
  c.m_sequences = 54;
  c.t_slots = 2500;
  c.agent.hidden_width = 16;
  c.agent.hidden_layers = 1;
  c.agent.batch_size = 8;
  c.traffic.kind = TrafficKind::synthetic;
  c.traffic.delta = 0.5;
  return c;
}

Verdict criterion_invariants(const Context&) {
  Verdict v;
  struct Case {
    std::string label;
    ExperimentConfig cfg;
  };
  std::vector<Case> cases;
  for (std::optional<std::size_t> n1 :
       {std::optional<std::size_t>{}, std::optional<std::size_t>{0}, std::optional<std::size_t>{4},
        std::optional<std::size_t>{10}}) {
    ExperimentConfig c = invariant_base();
    c.n_drl = n1;
    cases.push_back({"synthetic n1=" + (n1 ? std::to_string(*n1) : std::string("auto")), c});
  }
  {
    ExperimentConfig c = invariant_base();
    c.traffic.kind = TrafficKind::cmmpp;
    c.n_drl = 5;
    cases.push_back({"cmmpp n1=5", c});
  }
  {
    ExperimentConfig c = invariant_base();
    c.traffic.kind = TrafficKind::periodic;
    c.k_nodes = 40;
    c.n_total = 12;
    c.n_drl = 8;
    cases.push_back({"periodic n1=8", c});
  }
  std::size_t runs = 0;
  std::size_t slots = 0;
  std::size_t bad = 0;
  std::size_t internal = 0;
  std::string first;
  for (const Case& cs : cases) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const PointRun run = run_point(GridPoint{0.0, cs.cfg}, 0, seed);
      if (!run.summary.ok()) {
        v.require(false, cs.label + " seed " + std::to_string(seed) + " failed: " +
                             run.summary.status);
        continue;
      }
      std::string where;
      const std::size_t b = audit_point(run, cs.cfg, &where);
      if (b > 0 && first.empty()) {
        first = cs.label + " seed " + std::to_string(seed) + " " + where;
      }
      bad += b;
      internal += run.summary.violations;
      const auto& genie = run.genie.per_slot();
      const auto hy = average_packet_rate(run.hybrid, cs.cfg.k_nodes).per_slot();
      for (std::size_t t = 0; t < genie.size(); ++t) {
        if (hy[t] > genie[t] + 1e-12) {
          ++bad;
        }
      }
      slots += run.hybrid.size();
      ++runs;
    }
  }
  v.require(bad == 0 && internal == 0,
            std::to_string(runs) + " runs, " + std::to_string(slots) +
                " evaluated slots: RB conservation and genie bound violations " +
                std::to_string(bad) + " (harness count " + std::to_string(internal) + ")" +
                (first.empty() ? "" : "; first: " + first));

  std::vector<std::uint64_t> seeds(50);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seeds[i] = 1000 + i;
  }
  ExperimentConfig eq = invariant_base();
  eq.t_slots = 2000;
  const EquivalenceResult e = n1_zero_equivalence(eq, seeds);
  double mh = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    mh += e.hybrid[i] / static_cast<double>(seeds.size());
    mr += e.ra[i] / static_cast<double>(seeds.size());
  }
  v.require(e.test.p_value >= 0.01,
            "N1=0 hybrid " + fmt(mh, 5) + " vs RA " + fmt(mr, 5) + " over 50 seeds: Welch t " +
                fmt(e.test.t, 3) + ", p " + fmt(e.test.p_value, 3) + " (not rejected at 0.01)");
  return v;
}

// 8 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

Verdict criterion_determinism(const Context& ctx) {
  Verdict v;
  const fs::path base = fresh_dir(ctx, "determinism");
  {
    std::ofstream cfg(base / "small.cfg");
    cfg << "[small]\nkind = rate_vs_delta\ndelta_grid = 0.3, 0.7\nk = 12\nn = 6\nn1 = auto\n"
           "t = 1500\nhidden = 16\nlayers = 1\nbatch = 8\nseeds = 1-2\nthreads = 2\n";
  }
  const std::string cli = "\"" + ctx.cli.string() + "\"";
  const std::string cfg = "\"" + (base / "small.cfg").string() + "\"";
  std::vector<std::string> commands;
  for (const char* run : {"a", "b"}) {
    const std::string dir = "\"" + (base / run).string() + "\"";
    commands = {
        cli + " --seed 7 --out " + dir + " generate --k 20 --t 1000 --delta 0.3",
        cli + " --seed 7 --out " + dir + " generate --k 30 --t 600 --traffic periodic --format log "
              "--file log.csv",
        cli + " --seed 7 --out " + dir + " train --trace " + dir + "/trace.csv --slots 800 "
              "--hidden 16 --layers 1 --batch 8",
        cli + " --seed 7 --out " + dir + " evaluate --checkpoint " + dir + "/agent.bin --trace " +
              dir + "/trace.csv --begin 800 --n1 auto --stats " + dir + "/train_stats.csv",
        cli + " --out " + dir + " analyze --stats " + dir + "/train_stats.csv --k 20",
        cli + " --seed 11 --config " + cfg + " --out " + dir + " experiment",
    };
    for (const std::string& c : commands) {
      if (shell(c) != 0) {
        v.require(false, "command failed: " + c);
        return v;
      }
    }
  }
  std::size_t files = 0;
  std::size_t differing = 0;
  std::string first;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    const fs::path other = base / "b" / entry.path().filename();
    ++files;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      ++differing;
      if (first.empty()) {
        first = entry.path().filename().string();
      }
    }
  }
  std::size_t files_b = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(base / "b")) {
    ++files_b;
  }
  v.require(files > 0 && differing == 0 && files == files_b,
            std::to_string(files) + " output files from generate/train/evaluate/analyze/experiment, "
                                    "differing " +
                std::to_string(differing) + (first.empty() ? "" : " (first " + first + ")"));
  return v;
}

// 9 ------------------------------------------------------------------------

Verdict criterion_instantaneous(const Context& ctx) {
  Verdict v;
  const fs::path out = fresh_dir(ctx, "fig4");
  const ExperimentConfig cfg = load_configs(ctx, "fig4_instantaneous.cfg", out).front();
  const ExperimentResult r = run_experiment(cfg);
  // Per-slot comparison straight from the slot file.
  std::ifstream in(out / (cfg.name + "_slots.csv"));
  std::string line;
  std::getline(in, line);
  std::size_t slots = 0;
  std::size_t ge = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> f;
    while (std::getline(ss, cell, ',')) {
      f.push_back(std::stod(cell));
    }
    // seed,slot,active,ra_rate,hybrid_rate,genie_rate
    ++slots;
    ge += f.at(4) >= f.at(3) ? 1 : 0;
  }
  const double share = slots == 0 ? 0.0 : static_cast<double>(ge) / static_cast<double>(slots);
  const AggregateRow& row = r.rows.front();
  v.notes.push_back("info: mean ra " + fmt(row.ra_rate) + ", hybrid " + fmt(row.hybrid_rate) +
                    ", genie " + fmt(row.genie_rate) + ", n1 " + std::to_string(row.n1) +
                    ", seeds " + std::to_string(row.seeds_ok));
  v.require(share >= 0.9, "hybrid >= RA on " + fmt(100.0 * share) + "% of " +
                              std::to_string(slots) + " held-out slots (>= 90%)");
  v.require(row.violations == 0 && row.seeds_failed == 0,
            "invariant violations " + std::to_string(row.violations) + ", failed seeds " +
                std::to_string(row.seeds_failed));
  v.require(row.genie_rate >= row.hybrid_rate && row.genie_rate >= row.ra_rate,
            "genie bounds both schemes");
  return v;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"drlra acceptance suite"};
  Context ctx;
  std::string configs, cli, work;
  std::vector<std::string> only;
  app.add_option("--configs", configs, "Directory holding the experiment configs")->required();
  app.add_option("--cli", cli, "Path to the drlra executable")->required();
  app.add_option("--work", work, "Scratch directory for outputs")->required();
  app.add_option("ids", only, "Criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  ctx.configs = configs;
  ctx.cli = cli;
  ctx.work = work;
  fs::create_directories(ctx.work);

  const std::vector<Criterion> criteria{
      {"1", "noRB against subset enumeration and closed form", 10, criterion_norb},
      {"2", "RA closed form against Monte Carlo", 120, criterion_ra},
      {"3", "backprop against central differences", 30, criterion_gradients},
      {"4", "rate against delta (K=20, N=10, M=54)", 15 * 60, criterion_fig2},
      {"5", "rate against K (delta 0.3/N1=5, delta 0.7/N1=2)", 20 * 60, criterion_fig3},
      {"6", "transfer from CMMPP pretraining", 20 * 60, criterion_transfer},
      {"7", "protocol invariants and N1=0 equivalence", 10 * 60, criterion_invariants},
      {"8", "CLI determinism", 5 * 60, criterion_determinism},
      {"9", "instantaneous rates on a multi-period arrival log", 10 * 60,
       criterion_instantaneous},
  };

  bool all_pass = true;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run(ctx);
    } catch (const std::exception& e) {
      v.pass = false;
      v.notes.push_back(std::string("FAILED: exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    v.require(secs <= c.budget_s,
              "runtime " + fmt(secs, 3) + " s (<= " + fmt(c.budget_s, 4) + " s)");
    for (const std::string& n : v.notes) {
      std::cout << "    " << n << '\n';
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.title
              << std::endl;
    all_pass = all_pass && v.pass;
  }
  return all_pass ? 0 : 1;
}
