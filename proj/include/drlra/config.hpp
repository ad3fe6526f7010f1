#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "drlra/activity.hpp"
#include "drlra/agent.hpp"

namespace drlra::harness {

enum class ExperimentKind { rate_vs_delta, rate_vs_k, instantaneous, transfer, custom };
enum class TrafficKind { synthetic, cmmpp, periodic, arrival_log, trace_csv };

std::string to_string(ExperimentKind kind);
std::string to_string(TrafficKind kind);

/// Where a run's activity comes from.
struct TrafficSpec {
  TrafficKind kind = TrafficKind::synthetic;
  double delta = 0.3;
  activity::CmmppParams cmmpp{};
  /// arrival_log / trace_csv input.
  std::string file;
  double slot_duration = 1.0;
  /// Ingestion window in seconds; end <= start means "up to the last arrival".
  double window_start = 0.0;
  double window_end = 0.0;
  /// periodic: one period per node drawn uniformly from [min, max] seconds,
  /// phase uniform in [0, period).
  double period_min = 2.0;
  double period_max = 5.0;
};

struct TransferSpec {
  /// CMMPP slots used for pretraining.
  std::size_t pretrain_slots = 20000;
  /// Live-budget fractions of the sufficient slot count.
  std::vector<double> fractions{0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  /// Pretraining traffic.
  activity::CmmppParams cmmpp{};
  /// Sufficient live slot count; nullopt = plateau of the control curve.
  std::optional<std::size_t> sufficient_slots;
  /// Longest control run searched for the plateau.
  std::size_t control_budget = 20000;
  std::size_t checkpoint_every = 500;
  /// Held-out live slots for the reward measurement.
  std::size_t heldout_slots = 2000;
  /// Plateau band and tail share of the control run.
  double plateau_tolerance = 0.01;
  double plateau_tail = 0.1;

  void validate() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::custom;
  TrafficSpec traffic{};
  std::vector<double> delta_grid;
  std::vector<std::size_t> k_grid;
  std::size_t k_nodes = 20;
  std::size_t n_total = 10;
  /// nullopt selects N1 from the training statistics.
  std::optional<std::size_t> n_drl;
  std::size_t m_sequences = 54;
  std::size_t t_slots = 25000;
  double train_fraction = 0.8;
  agent::AgentParams agent{};
  bool ground_truth_state = false;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string out_dir = ".";
  std::size_t threads = 1;
  TransferSpec transfer{};

  std::size_t train_slots() const;
  void validate() const;
};

/// Every section of an INI-style file becomes one experiment named after the
/// section. Unknown keys are rejected.
std::vector<ExperimentConfig> parse_config(std::istream& in);
/// As parse_config; errors carry the path.
std::vector<ExperimentConfig> load_config_file(const std::string& path);

/// "1,2,5", "1-10" or a mix such as "1-3,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);
std::vector<std::size_t> parse_count_list(const std::string& text);

/// Flag value if set, else the DRLRA_OUT_DIR environment variable, else the
/// configured directory.
std::string resolve_out_dir(const std::optional<std::string>& flag, const std::string& configured);

} // namespace drlra::harness
