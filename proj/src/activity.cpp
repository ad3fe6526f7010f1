#include "drlra/activity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <unordered_map>

namespace drlra::activity {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string("CMMPP parameter ") + name + " must lie in [0,1]");
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::size_t slot_of(double time, double start, double duration) {
  auto t = static_cast<long long>(std::floor((time - start) / duration));
  t = std::max(t, 0LL);
  // Correct rounding so that start + t*d <= time < start + (t+1)*d holds exactly.
  while (start + static_cast<double>(t + 1) * duration <= time) {
    ++t;
  }
  while (t > 0 && start + static_cast<double>(t) * duration > time) {
    --t;
  }
  return static_cast<std::size_t>(t);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

} // namespace

void CmmppParams::validate() const {
  check_probability(regular_p, "regular_p");
  check_probability(alarm_p, "alarm_p");
  check_probability(regular_to_alarm, "regular_to_alarm");
  check_probability(alarm_to_regular, "alarm_to_regular");
  check_probability(coupling, "coupling");
}

ActivityTrace gen_synthetic(const SyntheticParams& params, RngStream& rng) {
  if (!(params.delta >= 0.0 && params.delta <= 1.0)) {
    throw std::invalid_argument("gen_synthetic: delta must lie in [0,1]");
  }
  const double p_even = 1.0 - params.delta / 2.0;
  const double p_odd = params.delta / 2.0;
  std::vector<std::uint8_t> data(params.k_nodes * params.t_slots);
  // Slot-major draw order so that a longer trace extends a shorter one.
  for (std::size_t t = 0; t < params.t_slots; ++t) {
    const double p = (t % 2 == 0) ? p_even : p_odd;
    for (std::size_t k = 0; k < params.k_nodes; ++k) {
      data[k * params.t_slots + t] = rng.bernoulli(p) ? 1 : 0;
    }
  }
  return ActivityTrace(params.k_nodes, params.t_slots, std::move(data));
}

ActivityTrace gen_cmmpp(const CmmppParams& params, std::size_t k_nodes, std::size_t t_slots,
                        RngStream& rng) {
  params.validate();
  std::vector<std::uint8_t> data(k_nodes * t_slots);
  std::vector<std::uint8_t> alarm(k_nodes, 0);
  for (std::size_t t = 0; t < t_slots; ++t) {
    const bool driver = rng.bernoulli(params.coupling);
    for (std::size_t k = 0; k < k_nodes; ++k) {
      const bool in_alarm = driver || alarm[k];
      data[k * t_slots + t] = rng.bernoulli(in_alarm ? params.alarm_p : params.regular_p) ? 1 : 0;
      if (alarm[k]) {
        alarm[k] = rng.bernoulli(params.alarm_to_regular) ? 0 : 1;
      } else {
        alarm[k] = rng.bernoulli(params.regular_to_alarm) ? 1 : 0;
      }
    }
  }
  return ActivityTrace(k_nodes, t_slots, std::move(data));
}

ActivityTrace ingest_trace(const ArrivalLog& log, double slot_duration_s, double window_start_s,
                           double window_end_s) {
  if (!(slot_duration_s > 0.0)) {
    throw std::invalid_argument("ingest_trace: slot duration must be positive");
  }
  if (!(window_end_s > window_start_s)) {
    throw std::invalid_argument("ingest_trace: empty window");
  }
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::string> labels;
  for (const auto& rec : log) {
    if (ids.emplace(rec.label, labels.size()).second) {
      labels.push_back(rec.label);
    }
  }
  // Number of half-open slots needed to cover [start, end).
  std::size_t t_slots = slot_of(window_end_s, window_start_s, slot_duration_s);
  if (window_start_s + static_cast<double>(t_slots) * slot_duration_s < window_end_s) {
    ++t_slots;
  }
  std::vector<std::uint8_t> data(labels.size() * t_slots, 0);
  std::size_t in_window = 0;
  for (const auto& rec : log) {
    if (rec.time_s < window_start_s || rec.time_s >= window_end_s) {
      continue;
    }
    ++in_window;
    const std::size_t t = slot_of(rec.time_s, window_start_s, slot_duration_s);
    data[ids.at(rec.label) * t_slots + t] = 1;
  }
  if (in_window == 0) {
    throw std::invalid_argument("ingest_trace: no arrivals inside the window");
  }
  return ActivityTrace(labels.size(), t_slots, std::move(data));
}

std::size_t active_count(const ActivityTrace& trace, std::size_t slot) {
  if (slot >= trace.t_slots()) {
    throw std::out_of_range("active_count: slot " + std::to_string(slot) + " >= T");
  }
  std::size_t count = 0;
  for (std::size_t k = 0; k < trace.k_nodes(); ++k) {
    count += trace.active(k, slot) ? 1 : 0;
  }
  return count;
}

std::vector<std::size_t> active_counts(const ActivityTrace& trace) {
  std::vector<std::size_t> counts(trace.t_slots(), 0);
  const auto& raw = trace.raw();
  for (std::size_t k = 0; k < trace.k_nodes(); ++k) {
    for (std::size_t t = 0; t < trace.t_slots(); ++t) {
      counts[t] += raw[k * trace.t_slots() + t];
    }
  }
  return counts;
}

ArrivalLog periodic_log(const std::vector<double>& periods, const std::vector<double>& offsets,
                        double duration_s) {
  if (periods.size() != offsets.size()) {
    throw std::invalid_argument("periodic_log: periods/offsets size mismatch");
  }
  ArrivalLog log;
  for (std::size_t k = 0; k < periods.size(); ++k) {
    if (!(periods[k] > 0.0)) {
      throw std::invalid_argument("periodic_log: periods must be positive");
    }
    for (std::size_t i = 0;; ++i) {
      const double x = offsets[k] + static_cast<double>(i) * periods[k];
      if (x >= duration_s) {
        break;
      }
      log.push_back({"node" + std::to_string(k), x});
    }
  }
  std::stable_sort(log.begin(), log.end(),
                   [](const ArrivalRecord& a, const ArrivalRecord& b) { return a.time_s < b.time_s; });
  return log;
}

ArrivalLog trace_to_arrival_log(const ActivityTrace& trace, double slot_duration_s) {
  ArrivalLog log;
  for (std::size_t k = 0; k < trace.k_nodes(); ++k) {
    for (std::size_t t = 0; t < trace.t_slots(); ++t) {
      if (trace.active(k, t)) {
        log.push_back({"node" + std::to_string(k), static_cast<double>(t) * slot_duration_s});
      }
    }
  }
  return log;
}

ArrivalLog read_arrival_log(std::istream& in) {
  ArrivalLog log;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw ParseError("empty arrival log", 0);
  }
  ++line_no;
  if (trim(line) != "node_label,timestamp_seconds") {
    throw ParseError("expected header 'node_label,timestamp_seconds'", line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) {
      continue;
    }
    const auto comma = view.find(',');
    if (comma == std::string_view::npos) {
      throw ParseError("expected 'node_label,timestamp_seconds'", line_no);
    }
    std::string_view label = trim(view.substr(0, comma));
    std::string_view stamp = trim(view.substr(comma + 1));
    double time = 0.0;
    if (label.empty()) {
      throw ParseError("empty node label", line_no);
    }
    if (!parse_number(stamp, time) || !std::isfinite(time) || time < 0.0) {
      throw ParseError("bad timestamp '" + std::string(stamp) + "'", line_no);
    }
    log.push_back({std::string(label), time});
  }
  return log;
}

void write_arrival_log(std::ostream& out, const ArrivalLog& log) {
  out << "node_label,timestamp_seconds\n";
  for (const auto& rec : log) {
    out << rec.label << ',' << format_double(rec.time_s) << '\n';
  }
}

ActivityTrace read_trace_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) {
    throw ParseError("empty trace file", 0);
  }
  std::string_view head = trim(line);
  const auto comma = head.find(',');
  std::size_t k_nodes = 0;
  std::size_t t_slots = 0;
  if (comma == std::string_view::npos || !parse_number(trim(head.substr(0, comma)), k_nodes) ||
      !parse_number(trim(head.substr(comma + 1)), t_slots)) {
    throw ParseError("expected header 'K,T'", line_no);
  }
  std::vector<std::uint8_t> data;
  data.reserve(k_nodes * t_slots);
  for (std::size_t k = 0; k < k_nodes; ++k) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError("missing row for node " + std::to_string(k), line_no);
    }
    std::string_view row = trim(line);
    std::size_t count = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const char c = row[i];
      if (c == '0' || c == '1') {
        data.push_back(static_cast<std::uint8_t>(c - '0'));
        ++count;
        if (i + 1 < row.size() && row[i + 1] != ',') {
          throw ParseError("entries must be single 0/1 digits", line_no);
        }
      } else if (c != ',') {
        throw ParseError("entries must be 0 or 1", line_no);
      }
    }
    if (count != t_slots) {
      throw ParseError("expected " + std::to_string(t_slots) + " entries, got " +
                           std::to_string(count),
                       line_no);
    }
  }
  return ActivityTrace(k_nodes, t_slots, std::move(data));
}

void write_trace_csv(std::ostream& out, const ActivityTrace& trace) {
  out << trace.k_nodes() << ',' << trace.t_slots() << '\n';
  std::string row;
  for (std::size_t k = 0; k < trace.k_nodes(); ++k) {
    row.clear();
    for (std::size_t t = 0; t < trace.t_slots(); ++t) {
      if (t > 0) {
        row.push_back(',');
      }
      row.push_back(trace.active(k, t) ? '1' : '0');
    }
    out << row << '\n';
  }
}

ActivityTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open trace file '" + path + "'");
  }
  try {
    return read_trace_csv(in);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_trace(const std::string& path, const ActivityTrace& trace) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write trace file '" + path + "'");
  }
  write_trace_csv(out, trace);
}

ArrivalLog load_arrival_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open arrival log '" + path + "'");
  }
  try {
    return read_arrival_log(in);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

} // namespace drlra::activity
