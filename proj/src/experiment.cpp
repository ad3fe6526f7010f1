#include "drlra/experiment.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "drlra/activity.hpp"
#include "drlra/ra.hpp"
#include "drlra/transfer.hpp"

namespace drlra::harness {

std::string key_name(ExperimentKind kind) {
  switch (kind) {
  case ExperimentKind::rate_vs_delta: return "delta";
  case ExperimentKind::rate_vs_k: return "k";
  case ExperimentKind::transfer: return "fraction";
  default: return "point";
  }
}

std::vector<GridPoint> grid_points(const ExperimentConfig& cfg) {
  std::vector<GridPoint> points;
  if (cfg.kind == ExperimentKind::rate_vs_delta) {
    for (double d : cfg.delta_grid) {
      GridPoint p{d, cfg};
      p.cfg.traffic.delta = d;
      points.push_back(std::move(p));
    }
  } else if (cfg.kind == ExperimentKind::rate_vs_k) {
    for (std::size_t k : cfg.k_grid) {
      GridPoint p{static_cast<double>(k), cfg};
      p.cfg.k_nodes = k;
      points.push_back(std::move(p));
    }
  } else {
    points.push_back(GridPoint{0.0, cfg});
  }
  return points;
}

ActivityTrace make_trace(const ExperimentConfig& cfg, RngStream& rng) {
  const TrafficSpec& tr = cfg.traffic;
  switch (tr.kind) {
  case TrafficKind::synthetic:
    return activity::gen_synthetic({tr.delta, cfg.k_nodes, cfg.t_slots}, rng);
  case TrafficKind::cmmpp:
    return activity::gen_cmmpp(tr.cmmpp, cfg.k_nodes, cfg.t_slots, rng);
  case TrafficKind::periodic: {
    std::vector<double> periods(cfg.k_nodes);
    std::vector<double> offsets(cfg.k_nodes);
    for (std::size_t k = 0; k < cfg.k_nodes; ++k) {
      periods[k] = tr.period_min + (tr.period_max - tr.period_min) * rng.uniform();
      offsets[k] = periods[k] * rng.uniform();
    }
    const double duration = static_cast<double>(cfg.t_slots) * tr.slot_duration;
    return activity::ingest_trace(activity::periodic_log(periods, offsets, duration),
                                  tr.slot_duration, 0.0, duration);
  }
  case TrafficKind::arrival_log: {
    const activity::ArrivalLog log = activity::load_arrival_log(tr.file);
    double end = tr.window_end;
    if (end <= tr.window_start) {
      double last = tr.window_start;
      for (const auto& r : log) {
        last = std::max(last, r.time_s);
      }
      end = last + tr.slot_duration;
    }
    try {
      return activity::ingest_trace(log, tr.slot_duration, tr.window_start, end);
    } catch (const std::exception& e) {
      throw std::runtime_error(tr.file + ": " + e.what());
    }
  }
  case TrafficKind::trace_csv:
    return activity::load_trace(tr.file);
  }
  throw std::logic_error("make_trace: unknown traffic kind");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool networks_finite(const agent::EnsembleAgent& agent) {
  for (std::size_t g = 0; g < agent.group_count(); ++g) {
    if (!agent.network(g).all_finite()) {
      return false;
    }
  }
  return true;
}

} // namespace

PointRun run_point(const GridPoint& point, std::size_t point_index, std::uint64_t seed,
                   const PointOptions& options) {
  const ExperimentConfig& cfg = point.cfg;
  const RngStream base = RngStream(seed).derive(static_cast<std::uint64_t>(point_index));
  PointRun run;
  run.summary.key = point.key;
  run.summary.seed = seed;

  RngStream trace_rng = base.derive("trace");
  const ActivityTrace trace = make_trace(cfg, trace_rng);
  const std::size_t k = trace.k_nodes();
  const std::size_t t = trace.t_slots();
  const auto split = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(t));
  if (k == 0 || split == 0 || split >= t) {
    throw std::invalid_argument(cfg.name + ": trace too short for the train/evaluate split");
  }

  // Without a fixed N1 the agent trains with every RB on the DRL stage.
  const std::size_t n1_train = options.n1_override.value_or(cfg.n_drl.value_or(cfg.n_total));
  const hybrid::HybridConfig train_cfg{cfg.n_total, n1_train, cfg.m_sequences};

  agent::EnsembleAgent agent(k, cfg.agent, base.derive("init"));
  std::vector<agent::StateWindow> windows = agent.empty_windows();
  RngStream train_rng = base.derive("train");
  try {
    hybrid::run_hybrid(agent, trace, 0, split, train_cfg, windows, {true, cfg.ground_truth_state},
                       train_rng);
  } catch (const agent::NonFiniteError&) {
    run.summary.status = "nonfinite_loss";
  }
  if (run.summary.ok() && !networks_finite(agent)) {
    run.summary.status = "nonfinite_loss";
  }
  if (!run.summary.ok()) {
    run.summary.ra_rate = run.summary.hybrid_rate = run.summary.genie_rate = kNaN;
    run.summary.hybrid_ge_ra = kNaN;
    return run;
  }

  RngStream stats_rng = base.derive("stats");
  run.stats = hybrid::estimate_eps_stats(agent, trace.slice(0, split), train_cfg, stats_rng);
  std::size_t n1 = n1_train;
  if (!options.n1_override && !cfg.n_drl) {
    n1 = hybrid::select_n1(run.stats, cfg.n_total, cfg.m_sequences, k);
  }
  run.summary.n1 = n1;

  const hybrid::HybridConfig eval_cfg{cfg.n_total, n1, cfg.m_sequences};
  RngStream eval_rng = base.derive("eval-hybrid");
  hybrid::HybridRun hyb = hybrid::run_hybrid(agent, trace, split, t, eval_cfg, windows,
                                             {false, cfg.ground_truth_state}, eval_rng);
  RngStream ra_rng = base.derive("eval-ra");
  run.ra = ra::run_ra_scheme(trace, split, t, ra::RaConfig{cfg.m_sequences, cfg.n_total}, ra_rng);
  run.hybrid = std::move(hyb.outcomes);
  run.rewards = std::move(hyb.rewards);
  run.eval_trace = trace.slice(split, t);
  run.genie = genie_rate(run.eval_trace, cfg.n_total);

  std::size_t ge = 0;
  for (std::size_t i = 0; i < run.hybrid.size(); ++i) {
    const NodeSet active = run.eval_trace.active_set(i);
    const std::size_t bound = std::min(active.size(), cfg.n_total);
    const SlotOutcome& h = run.hybrid[i];
    const SlotOutcome& r = run.ra[i];
    if (check_outcome(h, active, n1, cfg.n_total - n1) || check_outcome(r, active, 0, cfg.n_total) ||
        h.delivered_count() > bound || r.delivered_count() > bound) {
      ++run.summary.violations;
    }
    if (h.delivered_count() >= r.delivered_count()) {
      ++ge;
    }
  }
  run.summary.hybrid_rate = average_packet_rate(run.hybrid, k).mean();
  run.summary.ra_rate = average_packet_rate(run.ra, k).mean();
  run.summary.genie_rate = run.genie.mean();
  run.summary.hybrid_ge_ra = static_cast<double>(ge) / static_cast<double>(run.hybrid.size());
  return run;
}

std::vector<AggregateRow> aggregate(std::span<const SeedResult> seeds) {
  std::vector<double> keys;
  for (const SeedResult& s : seeds) {
    if (std::find(keys.begin(), keys.end(), s.key) == keys.end()) {
      keys.push_back(s.key);
    }
  }
  std::vector<AggregateRow> rows;
  for (double key : keys) {
    AggregateRow row;
    row.key = key;
    std::vector<const SeedResult*> good;
    std::map<std::size_t, std::size_t> n1_votes;
    for (const SeedResult& s : seeds) {
      if (s.key != key) {
        continue;
      }
      row.violations += s.violations;
      if (s.ok()) {
        good.push_back(&s);
        ++n1_votes[s.n1];
      } else {
        ++row.seeds_failed;
      }
    }
    row.seeds_ok = good.size();
    auto stat = [&](double SeedResult::*field, double& mean, double& sd) {
      if (good.empty()) {
        mean = sd = kNaN;
        return;
      }
      double sum = 0.0;
      for (const SeedResult* s : good) {
        sum += s->*field;
      }
      mean = sum / static_cast<double>(good.size());
      double ss = 0.0;
      for (const SeedResult* s : good) {
        ss += (s->*field - mean) * (s->*field - mean);
      }
      sd = good.size() > 1 ? std::sqrt(ss / static_cast<double>(good.size() - 1)) : 0.0;
    };
    stat(&SeedResult::ra_rate, row.ra_rate, row.ra_std);
    stat(&SeedResult::hybrid_rate, row.hybrid_rate, row.hybrid_std);
    stat(&SeedResult::genie_rate, row.genie_rate, row.genie_std);
    double unused = 0.0;
    stat(&SeedResult::hybrid_ge_ra, row.hybrid_ge_ra, unused);
    std::size_t best_votes = 0;
    for (const auto& [n1, votes] : n1_votes) {
      if (votes > best_votes) {
        best_votes = votes;
        row.n1 = n1;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

void write_seed_csv(std::ostream& out, const std::string& key, std::span<const SeedResult> seeds) {
  out << key << ",seed,status,n1,ra_rate,hybrid_rate,genie_rate,hybrid_ge_ra,violations\n";
  for (const SeedResult& s : seeds) {
    out << format_double(s.key) << ',' << s.seed << ',' << s.status << ',' << s.n1 << ','
        << format_double(s.ra_rate) << ',' << format_double(s.hybrid_rate) << ','
        << format_double(s.genie_rate) << ',' << format_double(s.hybrid_ge_ra) << ','
        << s.violations << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T field(const std::string& text, std::size_t line, const char* name) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(std::string("bad ") + name + " '" + text + "'", line);
  }
  return value;
}

} // namespace

std::vector<SeedResult> read_seed_csv(std::istream& in, std::string* key) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) {
    throw ParseError("empty seed file", 0);
  }
  const std::string suffix = ",seed,status,n1,ra_rate,hybrid_rate,genie_rate,hybrid_ge_ra,violations";
  if (line.size() <= suffix.size() || line.compare(line.size() - suffix.size(), suffix.size(), suffix) != 0) {
    throw ParseError("unexpected header", line_no);
  }
  if (key != nullptr) {
    *key = line.substr(0, line.size() - suffix.size());
  }
  std::vector<SeedResult> seeds;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 9) {
      throw ParseError("expected 9 fields", line_no);
    }
    SeedResult s;
    s.key = field<double>(f[0], line_no, "key");
    s.seed = field<std::uint64_t>(f[1], line_no, "seed");
    s.status = f[2];
    s.n1 = field<std::size_t>(f[3], line_no, "n1");
    s.ra_rate = field<double>(f[4], line_no, "ra_rate");
    s.hybrid_rate = field<double>(f[5], line_no, "hybrid_rate");
    s.genie_rate = field<double>(f[6], line_no, "genie_rate");
    s.hybrid_ge_ra = field<double>(f[7], line_no, "hybrid_ge_ra");
    s.violations = field<std::size_t>(f[8], line_no, "violations");
    seeds.push_back(std::move(s));
  }
  return seeds;
}

void write_aggregate_csv(std::ostream& out, const std::string& key,
                         std::span<const AggregateRow> rows) {
  out << key
      << ",ra_rate,hybrid_rate,genie_rate,n1,ra_std,hybrid_std,genie_std,hybrid_ge_ra,seeds_ok,"
         "seeds_failed,violations\n";
  for (const AggregateRow& r : rows) {
    out << format_double(r.key) << ',' << format_double(r.ra_rate) << ','
        << format_double(r.hybrid_rate) << ',' << format_double(r.genie_rate) << ',' << r.n1 << ','
        << format_double(r.ra_std) << ',' << format_double(r.hybrid_std) << ','
        << format_double(r.genie_std) << ',' << format_double(r.hybrid_ge_ra) << ',' << r.seeds_ok
        << ',' << r.seeds_failed << ',' << r.violations << '\n';
  }
}

void run_jobs(std::size_t count, std::size_t threads,
              const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      job(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) {
            first = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : pool) {
    th.join();
  }
  if (first) {
    std::rethrow_exception(first);
  }
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(path + ": cannot open for writing");
  }
  return out;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const std::string stem = (std::filesystem::path(cfg.out_dir) / cfg.name).string();
  ExperimentResult result;
  result.key = key_name(cfg.kind);

  if (cfg.kind == ExperimentKind::transfer) {
    const TransferResult tr = run_transfer(cfg, cfg.transfer);
    {
      auto out = open_out(stem + ".csv");
      write_transfer_csv(out, tr);
    }
    {
      auto out = open_out(stem + "_control_curve.csv");
      write_control_curve_csv(out, tr);
    }
    result.files = {stem + ".csv", stem + "_control_curve.csv"};
    return result;
  }

  const std::vector<GridPoint> points = grid_points(cfg);
  const std::size_t n_seeds = cfg.seeds.size();
  const bool per_slot = cfg.kind == ExperimentKind::instantaneous;
  std::vector<SeedResult> seeds(points.size() * n_seeds);
  std::vector<std::string> slot_rows(per_slot ? seeds.size() : 0);

  run_jobs(seeds.size(), cfg.threads, [&](std::size_t j) {
    const std::size_t p = j / n_seeds;
    PointRun run = run_point(points[p], p, cfg.seeds[j % n_seeds]);
    if (per_slot && run.summary.ok()) {
      const double k = static_cast<double>(run.eval_trace.k_nodes());
      std::ostringstream os;
      for (std::size_t i = 0; i < run.hybrid.size(); ++i) {
        os << run.summary.seed << ',' << run.hybrid[i].slot << ','
           << run.eval_trace.active_set(i).size() << ','
           << format_double(static_cast<double>(run.ra[i].delivered_count()) / k) << ','
           << format_double(static_cast<double>(run.hybrid[i].delivered_count()) / k) << ','
           << format_double(run.genie.per_slot()[i]) << '\n';
      }
      slot_rows[j] = os.str();
    }
    seeds[j] = std::move(run.summary);
  });

  result.seeds = std::move(seeds);
  result.rows = aggregate(result.seeds);
  {
    auto out = open_out(stem + "_seeds.csv");
    write_seed_csv(out, result.key, result.seeds);
  }
  {
    auto out = open_out(stem + ".csv");
    write_aggregate_csv(out, result.key, result.rows);
  }
  result.files = {stem + "_seeds.csv", stem + ".csv"};
  if (per_slot) {
    auto out = open_out(stem + "_slots.csv");
    out << "seed,slot,active,ra_rate,hybrid_rate,genie_rate\n";
    for (const std::string& rows : slot_rows) {
      out << rows;
    }
    result.files.push_back(stem + "_slots.csv");
  }
  return result;
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_t_test: need at least two samples per group");
  }
  auto moments = [](std::span<const double> x, double& mean, double& var) {
    mean = 0.0;
    for (double v : x) {
      mean += v;
    }
    mean /= static_cast<double>(x.size());
    var = 0.0;
    for (double v : x) {
      var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(x.size() - 1);
  };
  double ma = 0.0, va = 0.0, mb = 0.0, vb = 0.0;
  moments(a, ma, va);
  moments(b, mb, vb);
  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  TTest out;
  if (sa + sb == 0.0) {
    out.p_value = ma == mb ? 1.0 : 0.0;
    out.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
    out.dof = static_cast<double>(a.size() + b.size() - 2);
    return out;
  }
  out.t = (ma - mb) / std::sqrt(sa + sb);
  out.dof = (sa + sb) * (sa + sb) /
            (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(out.dof);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

EquivalenceResult n1_zero_equivalence(const ExperimentConfig& cfg,
                                      std::span<const std::uint64_t> seeds) {
  EquivalenceResult result;
  result.hybrid.resize(seeds.size());
  result.ra.resize(seeds.size());
  const GridPoint point{0.0, cfg};
  run_jobs(seeds.size(), cfg.threads, [&](std::size_t i) {
    const PointRun run = run_point(point, 0, seeds[i], PointOptions{std::size_t{0}});
    if (!run.summary.ok()) {
      throw std::runtime_error("n1_zero_equivalence: seed " + std::to_string(seeds[i]) + " failed");
    }
    result.hybrid[i] = run.summary.hybrid_rate;
    result.ra[i] = run.summary.ra_rate;
  });
  result.test = welch_t_test(result.hybrid, result.ra);
  return result;
}

} // namespace drlra::harness
