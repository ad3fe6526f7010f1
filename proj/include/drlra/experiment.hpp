#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drlra/agent.hpp"
#include "drlra/config.hpp"
#include "drlra/core.hpp"
#include "drlra/hybrid.hpp"

namespace drlra::harness {

/// One grid point of an experiment: the value in the key column and the
/// config with that value applied.
struct GridPoint {
  double key = 0.0;
  ExperimentConfig cfg;
};

/// Key column name: delta, k or point.
std::string key_name(ExperimentKind kind);
std::vector<GridPoint> grid_points(const ExperimentConfig& cfg);

/// Builds the activity trace for `cfg` (generated traffic uses `rng`).
ActivityTrace make_trace(const ExperimentConfig& cfg, RngStream& rng);

struct SeedResult {
  double key = 0.0;
  std::uint64_t seed = 0;
  /// "ok" or a one-word failure reason.
  std::string status = "ok";
  std::size_t n1 = 0;
  double ra_rate = 0.0;
  double hybrid_rate = 0.0;
  double genie_rate = 0.0;
  /// Share of evaluation slots where the hybrid scheme delivered at least as
  /// many packets as RA.
  double hybrid_ge_ra = 0.0;
  /// Slots breaking RB conservation or the genie bound.
  std::size_t violations = 0;

  bool ok() const { return status == "ok"; }
};

struct AggregateRow {
  double key = 0.0;
  double ra_rate = 0.0;
  double hybrid_rate = 0.0;
  double genie_rate = 0.0;
  /// Most frequent N1 across seeds, smaller on ties.
  std::size_t n1 = 0;
  double ra_std = 0.0;
  double hybrid_std = 0.0;
  double genie_std = 0.0;
  double hybrid_ge_ra = 0.0;
  std::size_t seeds_ok = 0;
  std::size_t seeds_failed = 0;
  std::size_t violations = 0;
};

/// Everything one seed produced at one grid point.
struct PointRun {
  SeedResult summary;
  ActivityTrace eval_trace;
  std::vector<SlotOutcome> hybrid;
  std::vector<double> rewards;
  std::vector<SlotOutcome> ra;
  RateSeries genie;
  std::vector<hybrid::EpsilonStats> stats;
};

struct PointOptions {
  /// Forces N1 regardless of the config.
  std::optional<std::size_t> n1_override;
};

/// Train on the first part of the trace, pick N1, then rate both schemes and
/// the genie on the held-out slots. A non-finite training loss yields a
/// failure summary instead of an exception.
PointRun run_point(const GridPoint& point, std::size_t point_index, std::uint64_t seed,
                   const PointOptions& options = {});

/// Mean, sample standard deviation and N1 mode per key over successful seeds,
/// in first-appearance order of the keys.
std::vector<AggregateRow> aggregate(std::span<const SeedResult> seeds);

void write_seed_csv(std::ostream& out, const std::string& key, std::span<const SeedResult> seeds);
std::vector<SeedResult> read_seed_csv(std::istream& in, std::string* key = nullptr);
void write_aggregate_csv(std::ostream& out, const std::string& key,
                         std::span<const AggregateRow> rows);

struct ExperimentResult {
  std::string key;
  std::vector<SeedResult> seeds;
  std::vector<AggregateRow> rows;
  std::vector<std::string> files;
};

/// Runs every grid point and seed, writes `<name>_seeds.csv` and `<name>.csv`
/// (plus `<name>_slots.csv` for instantaneous runs) into cfg.out_dir.
/// Transfer configs are delegated to run_transfer.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Calls job(i) for i in [0, count) on `threads` workers. Rethrows the first
/// exception after all workers finish.
void run_jobs(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& job);

/// Welch two-sample t-test of equal means.
struct TTest {
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

/// Runs `cfg` with N1 = 0 on each seed and compares the hybrid and RA rates.
struct EquivalenceResult {
  std::vector<double> hybrid;
  std::vector<double> ra;
  TTest test;
};
EquivalenceResult n1_zero_equivalence(const ExperimentConfig& cfg, std::span<const std::uint64_t> seeds);

} // namespace drlra::harness
