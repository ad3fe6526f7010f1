#include "drlra/core.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>

namespace drlra {

NodeSet make_node_set(std::vector<NodeId> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

NodeSet set_union(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet set_intersection(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet set_difference(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool is_subset(const NodeSet& sub, const NodeSet& super) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

bool contains(const NodeSet& set, NodeId node) {
  return std::binary_search(set.begin(), set.end(), node);
}

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

ActivityTrace::ActivityTrace(std::size_t k_nodes, std::size_t t_slots)
    : k_nodes_(k_nodes), t_slots_(t_slots), data_(k_nodes * t_slots, 0) {}

ActivityTrace::ActivityTrace(std::size_t k_nodes, std::size_t t_slots,
                             std::vector<std::uint8_t> active)
    : k_nodes_(k_nodes), t_slots_(t_slots), data_(std::move(active)) {
  if (data_.size() != k_nodes_ * t_slots_) {
    throw std::invalid_argument("ActivityTrace: expected " + std::to_string(k_nodes_ * t_slots_) +
                                " entries, got " + std::to_string(data_.size()));
  }
  for (auto v : data_) {
    if (v > 1) {
      throw std::invalid_argument("ActivityTrace: entries must be 0 or 1");
    }
  }
}

NodeSet ActivityTrace::active_set(std::size_t slot) const {
  if (slot >= t_slots_) {
    throw std::out_of_range("ActivityTrace: slot " + std::to_string(slot) + " out of range");
  }
  NodeSet out;
  for (std::size_t k = 0; k < k_nodes_; ++k) {
    if (data_[k * t_slots_ + slot]) {
      out.emplace_back(k);
    }
  }
  return out;
}

ActivityTrace ActivityTrace::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > t_slots_) {
    throw std::out_of_range("ActivityTrace::slice: bad range");
  }
  const std::size_t width = end - begin;
  std::vector<std::uint8_t> out(k_nodes_ * width);
  for (std::size_t k = 0; k < k_nodes_; ++k) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(k * t_slots_ + begin), width,
                out.begin() + static_cast<std::ptrdiff_t>(k * width));
  }
  return ActivityTrace(k_nodes_, width, std::move(out));
}

std::optional<std::string> check_outcome(const SlotOutcome& o, const NodeSet& active,
                                         std::size_t n_drl, std::size_t n_ra) {
  if (!is_subset(o.drl_delivered, o.drl_granted)) {
    return "drl_delivered not a subset of drl_granted";
  }
  if (!is_subset(o.ra_delivered, o.ra_attempted)) {
    return "ra_delivered not a subset of ra_attempted";
  }
  if (!set_intersection(o.ra_collided, o.ra_delivered).empty()) {
    return "collided node delivered";
  }
  if (!is_subset(o.drl_delivered, active) || !is_subset(o.ra_delivered, active)) {
    return "inactive node delivered";
  }
  if (o.drl_granted.size() > n_drl) {
    return "DRL grants exceed N1";
  }
  if (o.ra_delivered.size() > n_ra) {
    return "RA grants exceed N2";
  }
  if (o.wasted_rbs + o.drl_delivered.size() > n_drl) {
    return "wasted + DRL deliveries exceed N1";
  }
  return std::nullopt;
}

RateSeries::RateSeries(std::vector<double> per_slot) : per_slot_(std::move(per_slot)) {
  if (!per_slot_.empty()) {
    mean_ = std::accumulate(per_slot_.begin(), per_slot_.end(), 0.0) /
            static_cast<double>(per_slot_.size());
  }
}

void RateSeries::write_csv(std::ostream& out) const {
  out << "slot,rate\n";
  for (std::size_t t = 0; t < per_slot_.size(); ++t) {
    out << t << ',' << format_double(per_slot_[t]) << '\n';
  }
  out << "mean," << format_double(mean_) << '\n';
}

RateSeries RateSeries::read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  bool saw_mean = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "slot,rate") {
        throw ParseError("expected header 'slot,rate'", line_no);
      }
      continue;
    }
    if (line.empty()) {
      continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError("expected two fields", line_no);
    }
    std::string key = line.substr(0, comma);
    double v = 0.0;
    const char* first = line.data() + comma + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      throw ParseError("bad rate value", line_no);
    }
    if (key == "mean") {
      saw_mean = true;
      continue;
    }
    values.push_back(v);
  }
  if (!saw_mean) {
    throw ParseError("missing 'mean' line", 0);
  }
  return RateSeries(std::move(values));
}

RateSeries average_packet_rate(std::span<const SlotOutcome> outcomes, std::size_t k_nodes) {
  if (outcomes.empty()) {
    throw std::invalid_argument("average_packet_rate: no slots");
  }
  if (k_nodes == 0) {
    throw std::invalid_argument("average_packet_rate: K must be positive");
  }
  std::vector<double> per_slot;
  per_slot.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    per_slot.push_back(static_cast<double>(o.delivered_count()) / static_cast<double>(k_nodes));
  }
  return RateSeries(std::move(per_slot));
}

RateSeries genie_rate(const ActivityTrace& trace, std::size_t n_rbs) {
  if (trace.k_nodes() == 0) {
    throw std::invalid_argument("genie_rate: empty cell");
  }
  std::vector<double> per_slot(trace.t_slots(), 0.0);
  const auto& raw = trace.raw();
  for (std::size_t t = 0; t < trace.t_slots(); ++t) {
    std::size_t count = 0;
    for (std::size_t k = 0; k < trace.k_nodes(); ++k) {
      count += raw[k * trace.t_slots() + t];
    }
    per_slot[t] = static_cast<double>(std::min(count, n_rbs)) /
                  static_cast<double>(trace.k_nodes());
  }
  return RateSeries(std::move(per_slot));
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    return os.str();
  }
  return std::string(buf, ptr);
}

} // namespace drlra
