#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "drlra/core.hpp"
#include "drlra/rng.hpp"

namespace drlra::activity {

/// Periodic-random pattern: p_k(t) = 1 - delta/2 on even slots, delta/2 on
/// odd slots. Slot 0 is even.
struct SyntheticParams {
  double delta = 0.5;
  std::size_t k_nodes = 20;
  std::size_t t_slots = 1000;
};

/// Simplified coupled Markov-modulated source. Each node runs a two-state
/// regular/alarm chain; a cell-wide driver fires with probability `coupling`
/// per slot and puts every node in the alarm state for that slot.
struct CmmppParams {
  double regular_p = 0.1;
  double alarm_p = 0.9;
  double regular_to_alarm = 0.02;
  double alarm_to_regular = 0.2;
  double coupling = 0.05;

  void validate() const;
};

struct ArrivalRecord {
  std::string label;
  double time_s = 0.0;
};

using ArrivalLog = std::vector<ArrivalRecord>;

ActivityTrace gen_synthetic(const SyntheticParams& params, RngStream& rng);

ActivityTrace gen_cmmpp(const CmmppParams& params, std::size_t k_nodes, std::size_t t_slots,
                        RngStream& rng);

/// Slots arrivals in [window_start, window_end) into intervals
/// [start + t*d, start + (t+1)*d). Nodes are the distinct labels of the whole
/// log, numbered in order of first appearance. Throws when no record falls in
/// the window.
ActivityTrace ingest_trace(const ArrivalLog& log, double slot_duration_s, double window_start_s,
                           double window_end_s);

/// K^a(t).
std::size_t active_count(const ActivityTrace& trace, std::size_t slot);

/// Per-slot active counts over the whole trace.
std::vector<std::size_t> active_counts(const ActivityTrace& trace);

/// Strictly periodic reporters: node k reports every periods[k] seconds,
/// starting at offsets[k]. Records are emitted in time order.
ArrivalLog periodic_log(const std::vector<double>& periods, const std::vector<double>& offsets,
                        double duration_s);

/// Node-major arrival log with one record at the start of every active slot.
/// Ingesting it with the same slot duration gives back `trace` whenever every
/// node is active at least once.
ArrivalLog trace_to_arrival_log(const ActivityTrace& trace, double slot_duration_s);

/// `node_label,timestamp_seconds` CSV with a one-line header.
ArrivalLog read_arrival_log(std::istream& in);
void write_arrival_log(std::ostream& out, const ArrivalLog& log);

/// First line `K,T`, then one comma-separated 0/1 row per node.
ActivityTrace read_trace_csv(std::istream& in);
void write_trace_csv(std::ostream& out, const ActivityTrace& trace);

ActivityTrace load_trace(const std::string& path);
void save_trace(const std::string& path, const ActivityTrace& trace);
ArrivalLog load_arrival_log(const std::string& path);

} // namespace drlra::activity
