#include "drlra/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <map>
#include <stdexcept>
#include <type_traits>

namespace drlra::harness {

namespace pt = boost::property_tree;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
  case ExperimentKind::rate_vs_delta: return "rate_vs_delta";
  case ExperimentKind::rate_vs_k: return "rate_vs_k";
  case ExperimentKind::instantaneous: return "instantaneous";
  case ExperimentKind::transfer: return "transfer";
  case ExperimentKind::custom: return "custom";
  }
  return "custom";
}

std::string to_string(TrafficKind kind) {
  switch (kind) {
  case TrafficKind::synthetic: return "synthetic";
  case TrafficKind::cmmpp: return "cmmpp";
  case TrafficKind::periodic: return "periodic";
  case TrafficKind::arrival_log: return "arrival_log";
  case TrafficKind::trace_csv: return "trace_csv";
  }
  return "synthetic";
}

void TransferSpec::validate() const {
  if (fractions.empty()) {
    throw std::invalid_argument("transfer: fraction list is empty");
  }
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::invalid_argument("transfer: fractions must lie in [0,1]");
    }
  }
  if (checkpoint_every == 0 || heldout_slots == 0 || control_budget == 0) {
    throw std::invalid_argument("transfer: checkpoint_every, heldout_slots and control_budget must be positive");
  }
  if (sufficient_slots && *sufficient_slots == 0) {
    throw std::invalid_argument("transfer: sufficient_slots must be positive");
  }
  if (!(plateau_tolerance > 0.0) || !(plateau_tail > 0.0 && plateau_tail <= 1.0)) {
    throw std::invalid_argument("transfer: bad plateau parameters");
  }
  cmmpp.validate();
}

std::size_t ExperimentConfig::train_slots() const {
  return static_cast<std::size_t>(train_fraction * static_cast<double>(t_slots));
}

void ExperimentConfig::validate() const {
  if (k_nodes == 0 || n_total == 0 || m_sequences == 0 || t_slots == 0) {
    throw std::invalid_argument(name + ": k, n, m and t must be positive");
  }
  if (n_drl && *n_drl > n_total) {
    throw std::invalid_argument(name + ": n1 must not exceed n");
  }
  if (seeds.empty()) {
    throw std::invalid_argument(name + ": seed list is empty");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument(name + ": train_fraction must lie in (0,1)");
  }
  if (train_slots() == 0 || train_slots() >= t_slots) {
    throw std::invalid_argument(name + ": train/evaluate split leaves an empty segment");
  }
  if (threads == 0) {
    throw std::invalid_argument(name + ": threads must be positive");
  }
  if (!(traffic.delta >= 0.0 && traffic.delta <= 1.0)) {
    throw std::invalid_argument(name + ": delta must lie in [0,1]");
  }
  if (!(traffic.slot_duration > 0.0)) {
    throw std::invalid_argument(name + ": slot_duration must be positive");
  }
  if (!(traffic.period_min > 0.0 && traffic.period_max >= traffic.period_min)) {
    throw std::invalid_argument(name + ": need 0 < period_min <= period_max");
  }
  if ((traffic.kind == TrafficKind::arrival_log || traffic.kind == TrafficKind::trace_csv) &&
      traffic.file.empty()) {
    throw std::invalid_argument(name + ": traffic '" + to_string(traffic.kind) + "' needs trace_file");
  }
  traffic.cmmpp.validate();
  agent.validate();
  switch (kind) {
  case ExperimentKind::rate_vs_delta:
    if (delta_grid.empty()) {
      throw std::invalid_argument(name + ": rate_vs_delta needs delta_grid");
    }
    for (double d : delta_grid) {
      if (!(d >= 0.0 && d <= 1.0)) {
        throw std::invalid_argument(name + ": delta_grid entries must lie in [0,1]");
      }
    }
    if (traffic.kind != TrafficKind::synthetic) {
      throw std::invalid_argument(name + ": rate_vs_delta needs synthetic traffic");
    }
    break;
  case ExperimentKind::rate_vs_k:
    if (k_grid.empty()) {
      throw std::invalid_argument(name + ": rate_vs_k needs k_grid");
    }
    if (std::find(k_grid.begin(), k_grid.end(), std::size_t{0}) != k_grid.end()) {
      throw std::invalid_argument(name + ": k_grid entries must be positive");
    }
    if (traffic.kind == TrafficKind::arrival_log || traffic.kind == TrafficKind::trace_csv) {
      throw std::invalid_argument(name + ": rate_vs_k needs generated traffic");
    }
    break;
  case ExperimentKind::transfer:
    if (!n_drl) {
      throw std::invalid_argument(name + ": transfer needs a fixed n1");
    }
    transfer.validate();
    break;
  default:
    break;
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) {
        out.push_back(cur);
      }
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) {
    out.push_back(cur);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& raw, const std::string& what) {
  const std::string text = trim(raw);
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument(what + ": '" + text + "' is not a valid number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw std::invalid_argument(what + ": value must be finite");
    }
  }
  return value;
}

bool parse_bool(const std::string& raw, const std::string& what) {
  const std::string text = trim(raw);
  if (text == "true" || text == "1" || text == "yes" || text == "on") {
    return true;
  }
  if (text == "false" || text == "0" || text == "no" || text == "off") {
    return false;
  }
  throw std::invalid_argument(what + ": '" + text + "' is not a boolean");
}

ExperimentKind parse_kind(const std::string& text) {
  for (auto k : {ExperimentKind::rate_vs_delta, ExperimentKind::rate_vs_k,
                 ExperimentKind::instantaneous, ExperimentKind::transfer, ExperimentKind::custom}) {
    if (to_string(k) == text) {
      return k;
    }
  }
  throw std::invalid_argument("kind: unknown experiment kind '" + text + "'");
}

TrafficKind parse_traffic(const std::string& text) {
  for (auto k : {TrafficKind::synthetic, TrafficKind::cmmpp, TrafficKind::periodic,
                 TrafficKind::arrival_log, TrafficKind::trace_csv}) {
    if (to_string(k) == text) {
      return k;
    }
  }
  throw std::invalid_argument("traffic: unknown traffic source '" + text + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

std::size_t count(const std::string& v, const std::string& key) {
  return parse_number<std::size_t>(v, key);
}
double real(const std::string& v, const std::string& key) { return parse_number<double>(v, key); }

void set_cmmpp(activity::CmmppParams& p, const std::string& field, const std::string& v,
               const std::string& key) {
  if (field == "regular_p") p.regular_p = real(v, key);
  else if (field == "alarm_p") p.alarm_p = real(v, key);
  else if (field == "regular_to_alarm") p.regular_to_alarm = real(v, key);
  else if (field == "alarm_to_regular") p.alarm_to_regular = real(v, key);
  else if (field == "coupling") p.coupling = real(v, key);
  else throw std::invalid_argument("unknown key '" + key + "'");
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"kind", [](auto& c, auto& v, auto&) { c.kind = parse_kind(trim(v)); }},
      {"traffic", [](auto& c, auto& v, auto&) { c.traffic.kind = parse_traffic(trim(v)); }},
      {"delta", [](auto& c, auto& v, auto& k) { c.traffic.delta = real(v, k); }},
      {"delta_grid", [](auto& c, auto& v, auto&) { c.delta_grid = parse_double_list(v); }},
      {"k", [](auto& c, auto& v, auto& k) { c.k_nodes = count(v, k); }},
      {"k_grid", [](auto& c, auto& v, auto&) { c.k_grid = parse_count_list(v); }},
      {"n", [](auto& c, auto& v, auto& k) { c.n_total = count(v, k); }},
      {"n1",
       [](auto& c, auto& v, auto& k) {
         if (trim(v) == "auto") {
           c.n_drl.reset();
         } else {
           c.n_drl = count(v, k);
         }
       }},
      {"m", [](auto& c, auto& v, auto& k) { c.m_sequences = count(v, k); }},
      {"t", [](auto& c, auto& v, auto& k) { c.t_slots = count(v, k); }},
      {"train_fraction", [](auto& c, auto& v, auto& k) { c.train_fraction = real(v, k); }},
      {"t_h", [](auto& c, auto& v, auto& k) { c.agent.history = count(v, k); }},
      {"group_size", [](auto& c, auto& v, auto& k) { c.agent.group_size = count(v, k); }},
      {"hidden", [](auto& c, auto& v, auto& k) { c.agent.hidden_width = count(v, k); }},
      {"layers", [](auto& c, auto& v, auto& k) { c.agent.hidden_layers = count(v, k); }},
      {"gamma", [](auto& c, auto& v, auto& k) { c.agent.gamma = real(v, k); }},
      {"alpha", [](auto& c, auto& v, auto& k) { c.agent.alpha = real(v, k); }},
      {"optimizer",
       [](auto& c, auto& v, auto&) {
         const std::string o = trim(v);
         if (o == "sgd") c.agent.optimizer = agent::OptimizerKind::sgd;
         else if (o == "adam") c.agent.optimizer = agent::OptimizerKind::adam;
         else throw std::invalid_argument("optimizer: expected sgd or adam, got '" + o + "'");
       }},
      {"replay", [](auto& c, auto& v, auto& k) { c.agent.replay = parse_bool(v, k); }},
      {"replay_capacity", [](auto& c, auto& v, auto& k) { c.agent.replay_capacity = count(v, k); }},
      {"batch", [](auto& c, auto& v, auto& k) { c.agent.batch_size = count(v, k); }},
      {"target_network", [](auto& c, auto& v, auto& k) { c.agent.target_network = parse_bool(v, k); }},
      {"target_refresh", [](auto& c, auto& v, auto& k) { c.agent.target_refresh = count(v, k); }},
      {"epsilon_start", [](auto& c, auto& v, auto& k) { c.agent.epsilon.value = real(v, k); }},
      {"epsilon_floor", [](auto& c, auto& v, auto& k) { c.agent.epsilon.floor = real(v, k); }},
      {"epsilon_decay", [](auto& c, auto& v, auto& k) { c.agent.epsilon.decay = real(v, k); }},
      {"ground_truth_state", [](auto& c, auto& v, auto& k) { c.ground_truth_state = parse_bool(v, k); }},
      {"seeds", [](auto& c, auto& v, auto&) { c.seeds = parse_seed_list(v); }},
      {"out", [](auto& c, auto& v, auto&) { c.out_dir = trim(v); }},
      {"threads", [](auto& c, auto& v, auto& k) { c.threads = count(v, k); }},
      {"trace_file", [](auto& c, auto& v, auto&) { c.traffic.file = trim(v); }},
      {"slot_duration", [](auto& c, auto& v, auto& k) { c.traffic.slot_duration = real(v, k); }},
      {"window_start", [](auto& c, auto& v, auto& k) { c.traffic.window_start = real(v, k); }},
      {"window_end", [](auto& c, auto& v, auto& k) { c.traffic.window_end = real(v, k); }},
      {"period_min", [](auto& c, auto& v, auto& k) { c.traffic.period_min = real(v, k); }},
      {"period_max", [](auto& c, auto& v, auto& k) { c.traffic.period_max = real(v, k); }},
      {"pretrain_slots", [](auto& c, auto& v, auto& k) { c.transfer.pretrain_slots = count(v, k); }},
      {"fractions", [](auto& c, auto& v, auto&) { c.transfer.fractions = parse_double_list(v); }},
      {"sufficient_slots",
       [](auto& c, auto& v, auto& k) {
         if (trim(v) == "auto") {
           c.transfer.sufficient_slots.reset();
         } else {
           c.transfer.sufficient_slots = count(v, k);
         }
       }},
      {"control_budget", [](auto& c, auto& v, auto& k) { c.transfer.control_budget = count(v, k); }},
      {"checkpoint_every", [](auto& c, auto& v, auto& k) { c.transfer.checkpoint_every = count(v, k); }},
      {"heldout_slots", [](auto& c, auto& v, auto& k) { c.transfer.heldout_slots = count(v, k); }},
      {"plateau_tolerance", [](auto& c, auto& v, auto& k) { c.transfer.plateau_tolerance = real(v, k); }},
      {"plateau_tail", [](auto& c, auto& v, auto& k) { c.transfer.plateau_tail = real(v, k); }},
  };
  return table;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  if (auto it = table.find(key); it != table.end()) {
    it->second(cfg, value, key);
    return;
  }
  // Prefixed CMMPP parameters: cmmpp_* for live traffic, pretrain_* for the
  // transfer source.
  if (key.rfind("cmmpp_", 0) == 0) {
    set_cmmpp(cfg.traffic.cmmpp, key.substr(6), value, key);
    return;
  }
  if (key.rfind("pretrain_", 0) == 0) {
    set_cmmpp(cfg.transfer.cmmpp, key.substr(9), value, key);
    return;
  }
  throw std::invalid_argument("unknown key '" + key + "'");
}

} // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : split_list(text)) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(parse_number<std::uint64_t>(item, "seeds"));
      continue;
    }
    const auto lo = parse_number<std::uint64_t>(item.substr(0, dash), "seeds");
    const auto hi = parse_number<std::uint64_t>(item.substr(dash + 1), "seeds");
    if (hi < lo) {
      throw std::invalid_argument("seeds: empty range '" + item + "'");
    }
    for (std::uint64_t s = lo; s <= hi; ++s) {
      seeds.push_back(s);
    }
  }
  if (seeds.empty()) {
    throw std::invalid_argument("seeds: list is empty");
  }
  return seeds;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& item : split_list(text)) {
    out.push_back(parse_number<double>(item, "list"));
  }
  return out;
}

std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(text)) {
    out.push_back(parse_number<std::size_t>(item, "list"));
  }
  return out;
}

std::vector<ExperimentConfig> parse_config(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  // The INI reader drops sections without keys; collect headers separately so
  // an empty section still yields a default experiment.
  std::vector<std::string> sections;
  {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      const std::string t = trim(line);
      if (t.size() > 2 && t.front() == '[' && t.back() == ']') {
        sections.push_back(trim(t.substr(1, t.size() - 2)));
      }
    }
  }
  pt::ptree tree;
  try {
    std::istringstream body(text);
    pt::ini_parser::read_ini(body, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  for (const auto& [name, node] : tree) {
    if (node.empty() && !node.data().empty()) {
      throw std::invalid_argument("key '" + name + "' appears outside a section");
    }
  }
  std::vector<ExperimentConfig> out;
  for (const std::string& section : sections) {
    ExperimentConfig cfg;
    cfg.name = section;
    if (const auto body = tree.get_child_optional(pt::ptree::path_type(section, '\0'))) {
      for (const auto& [key, node] : *body) {
        try {
          apply_key(cfg, key, node.data());
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument("[" + section + "] " + e.what());
        }
      }
    }
    cfg.validate();
    out.push_back(std::move(cfg));
  }
  if (out.empty()) {
    throw std::invalid_argument("no experiment sections");
  }
  return out;
}

std::vector<ExperimentConfig> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(path + ": cannot open config file");
  }
  try {
    return parse_config(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string resolve_out_dir(const std::optional<std::string>& flag, const std::string& configured) {
  if (flag) {
    return *flag;
  }
  if (const char* env = std::getenv("DRLRA_OUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return configured;
}

} // namespace drlra::harness
