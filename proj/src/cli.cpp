#include "drlra/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "drlra/activity.hpp"
#include "drlra/config.hpp"
#include "drlra/experiment.hpp"
#include "drlra/hybrid.hpp"
#include "drlra/ra.hpp"

namespace drlra::harness {

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
  std::string name;
};

/// Agent and cell flags shared by train and evaluate.
struct CellFlags {
  std::size_t k = 20;
  std::size_t t = 1000;
  std::size_t n = 10;
  std::string n1 = "auto";
  std::size_t m = 54;
  double delta = 0.3;
  std::string traffic = "synthetic";
  std::string log;
  double slot_duration = 1.0;
  double window_start = 0.0;
  double window_end = 0.0;
  std::size_t group_size = 4;
  std::size_t history = 4;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  double gamma = 0.05;
  double alpha = 0.001;
  std::string optimizer = "sgd";
  std::size_t batch = 32;
  std::size_t replay_capacity = 10000;
  std::size_t target_refresh = 100;
};

bool given(const CLI::App* app, const std::string& name) {
  // Looks through the subcommand and then the parent.
  for (const CLI::App* a = app; a != nullptr; a = a->get_parent()) {
    try {
      if (a->get_option(name)->count() > 0) {
        return true;
      }
    } catch (const CLI::OptionNotFound&) {
    }
  }
  return false;
}

/// Starting point for generate/train/evaluate: the chosen config section when
/// --config is set, otherwise defaults. Explicit flags then override it.
ExperimentConfig base_config(const Globals& g) {
  if (g.config.empty()) {
    return ExperimentConfig{};
  }
  const auto all = load_config_file(g.config);
  if (g.name.empty()) {
    return all.front();
  }
  for (const auto& c : all) {
    if (c.name == g.name) {
      return c;
    }
  }
  throw std::runtime_error(g.config + ": no section named '" + g.name + "'");
}

void apply_cell_flags(ExperimentConfig& cfg, const CellFlags& f, const CLI::App* app) {
  if (given(app, "--k")) cfg.k_nodes = f.k;
  if (given(app, "--t")) cfg.t_slots = f.t;
  if (given(app, "--n")) cfg.n_total = f.n;
  if (given(app, "--n1")) {
    if (f.n1 == "auto") {
      cfg.n_drl.reset();
    } else {
      cfg.n_drl = parse_count_list(f.n1).at(0);
    }
  }
  if (given(app, "--m")) cfg.m_sequences = f.m;
  if (given(app, "--delta")) cfg.traffic.delta = f.delta;
  if (given(app, "--traffic")) {
    std::istringstream in("[x]\ntraffic = " + f.traffic + "\n");
    cfg.traffic.kind = parse_config(in).front().traffic.kind;
  }
  if (given(app, "--log")) cfg.traffic.file = f.log;
  if (given(app, "--slot-duration")) cfg.traffic.slot_duration = f.slot_duration;
  if (given(app, "--window-start")) cfg.traffic.window_start = f.window_start;
  if (given(app, "--window-end")) cfg.traffic.window_end = f.window_end;
  if (given(app, "--group-size")) cfg.agent.group_size = f.group_size;
  if (given(app, "--history")) cfg.agent.history = f.history;
  if (given(app, "--hidden")) cfg.agent.hidden_width = f.hidden;
  if (given(app, "--layers")) cfg.agent.hidden_layers = f.layers;
  if (given(app, "--gamma")) cfg.agent.gamma = f.gamma;
  if (given(app, "--alpha")) cfg.agent.alpha = f.alpha;
  if (given(app, "--optimizer")) {
    cfg.agent.optimizer = f.optimizer == "adam" ? agent::OptimizerKind::adam : agent::OptimizerKind::sgd;
  }
  if (given(app, "--batch")) cfg.agent.batch_size = f.batch;
  if (given(app, "--replay-capacity")) cfg.agent.replay_capacity = f.replay_capacity;
  if (given(app, "--target-refresh")) cfg.agent.target_refresh = f.target_refresh;
  cfg.agent.validate();
  if (cfg.n_drl && *cfg.n_drl > cfg.n_total) {
    throw std::invalid_argument("--n1 must not exceed --n");
  }
}

void add_cell_flags(CLI::App* app, CellFlags& f, bool traffic, bool agent_flags) {
  app->add_option("--n", f.n, "Resource blocks N");
  app->add_option("--n1", f.n1, "DRL-stage RBs N1, or 'auto'");
  app->add_option("--m", f.m, "Orthonormal sequences M");
  if (traffic) {
    app->add_option("--k", f.k, "Nodes K");
    app->add_option("--t", f.t, "Slots T");
    app->add_option("--delta", f.delta, "Synthetic randomness delta");
    app->add_option("--traffic", f.traffic, "synthetic|cmmpp|periodic|arrival_log|trace_csv")
        ->check(CLI::IsMember({"synthetic", "cmmpp", "periodic", "arrival_log", "trace_csv"}));
    app->add_option("--log", f.log, "Input file for arrival_log/trace_csv traffic");
    app->add_option("--slot-duration", f.slot_duration, "Slot length in seconds");
    app->add_option("--window-start", f.window_start, "Ingestion window start (s)");
    app->add_option("--window-end", f.window_end, "Ingestion window end (s)");
  }
  if (agent_flags) {
    app->add_option("--group-size", f.group_size, "Nodes per Q-network");
    app->add_option("--history", f.history, "Observation window t_h");
    app->add_option("--hidden", f.hidden, "Hidden layer width");
    app->add_option("--layers", f.layers, "Hidden layer count");
    app->add_option("--gamma", f.gamma, "Discount factor");
    app->add_option("--alpha", f.alpha, "Learning rate");
    app->add_option("--optimizer", f.optimizer, "sgd|adam")->check(CLI::IsMember({"sgd", "adam"}));
    app->add_option("--batch", f.batch, "Replay batch size");
    app->add_option("--replay-capacity", f.replay_capacity, "Replay buffer size");
    app->add_option("--target-refresh", f.target_refresh, "Target network refresh period");
  }
}

std::string out_dir(const Globals& g, const CLI::App* app, const std::string& configured) {
  std::optional<std::string> flag;
  if (given(app, "--out")) {
    flag = g.out;
  }
  const std::string dir = resolve_out_dir(flag, configured);
  std::filesystem::create_directories(dir);
  return dir;
}

std::ofstream open_out(const std::string& dir, const std::string& file) {
  const std::string path = (std::filesystem::path(dir) / file).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(path + ": cannot open for writing");
  }
  return out;
}

ActivityTrace trace_for(const ExperimentConfig& cfg, const std::string& trace_path,
                        std::uint64_t seed) {
  if (!trace_path.empty()) {
    return activity::load_trace(trace_path);
  }
  RngStream rng = RngStream(seed).derive("trace");
  return make_trace(cfg, rng);
}

std::vector<hybrid::EpsilonStats> load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(path + ": cannot open stats file");
  }
  try {
    return hybrid::read_stats_csv(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_key_values(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& kv) {
  out << "key,value\n";
  for (const auto& [k, v] : kv) {
    out << k << ',' << v << '\n';
  }
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid DRL-aided random access simulator", "drlra"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Root random seed");
  app.add_option("--config", g.config, "Experiment config file");
  app.add_option("--out", g.out, "Output directory (else $DRLRA_OUT_DIR, else config/.)");
  app.add_option("--name", g.name, "Config section to use");

  CellFlags gen_f, train_f, eval_f;

  auto* gen = app.add_subcommand("generate", "Write an activity trace CSV");
  add_cell_flags(gen, gen_f, true, false);
  std::string gen_file = "trace.csv";
  std::string gen_format = "trace";
  gen->add_option("--file", gen_file, "Output file name inside the output directory");
  gen->add_option("--format", gen_format, "trace|log")->check(CLI::IsMember({"trace", "log"}));

  auto* train = app.add_subcommand("train", "Train an agent and write a checkpoint");
  add_cell_flags(train, train_f, true, true);
  std::string train_trace;
  std::size_t train_slots = 0;
  train->add_option("--trace", train_trace, "Trace CSV (else generated from the traffic flags)");
  train->add_option("--slots", train_slots, "Training slots (default: whole trace)");

  auto* eval = app.add_subcommand("evaluate", "Rate a checkpoint against RA on a trace");
  add_cell_flags(eval, eval_f, true, false);
  std::string eval_ckpt = "agent.bin";
  std::string eval_trace;
  std::string eval_stats;
  std::size_t eval_begin = 0;
  std::size_t eval_end = 0;
  eval->add_option("--checkpoint", eval_ckpt, "Agent checkpoint")->required();
  eval->add_option("--trace", eval_trace, "Trace CSV (else generated from the traffic flags)");
  eval->add_option("--stats", eval_stats, "Stats CSV used when --n1 auto");
  eval->add_option("--begin", eval_begin, "First slot");
  eval->add_option("--end", eval_end, "One past the last slot (default: trace end)");

  auto* exp = app.add_subcommand("experiment", "Run the experiments of a config file");
  std::size_t exp_threads = 0;
  exp->add_option("--threads", exp_threads, "Worker threads (overrides the config)");

  auto* analyze = app.add_subcommand("analyze", "Closed-form rates from a stats CSV");
  std::string an_stats;
  std::size_t an_k = 20, an_n = 10, an_m = 54;
  analyze->add_option("--stats", an_stats, "Stats CSV")->required();
  analyze->add_option("--k", an_k, "Nodes K");
  analyze->add_option("--n", an_n, "Resource blocks N");
  analyze->add_option("--m", an_m, "Orthonormal sequences M");

  for (auto* sub : {gen, train, eval, exp, analyze}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = base_config(g);
      apply_cell_flags(cfg, gen_f, gen);
      const ActivityTrace trace = trace_for(cfg, "", g.seed);
      const std::string dir = out_dir(g, gen, cfg.out_dir);
      auto file = open_out(dir, gen_file);
      if (gen_format == "log") {
        activity::write_arrival_log(file, activity::trace_to_arrival_log(trace, cfg.traffic.slot_duration));
      } else {
        activity::write_trace_csv(file, trace);
      }
      out << "wrote " << (std::filesystem::path(dir) / gen_file).string() << " (K=" << trace.k_nodes()
          << ", T=" << trace.t_slots() << ")\n";
    } else if (train->parsed()) {
      ExperimentConfig cfg = base_config(g);
      apply_cell_flags(cfg, train_f, train);
      const ActivityTrace trace = trace_for(cfg, train_trace, g.seed);
      const std::size_t slots = train_slots == 0 ? trace.t_slots() : std::min(train_slots, trace.t_slots());
      const std::size_t n1_train = cfg.n_drl.value_or(cfg.n_total);
      const hybrid::HybridConfig hcfg{cfg.n_total, n1_train, cfg.m_sequences};
      const RngStream base(g.seed);
      agent::EnsembleAgent agent(trace.k_nodes(), cfg.agent, base.derive("init"));
      std::vector<agent::StateWindow> windows = agent.empty_windows();
      RngStream rng = base.derive("train");
      const hybrid::HybridRun run =
          hybrid::run_hybrid(agent, trace, 0, slots, hcfg, windows, {true, cfg.ground_truth_state}, rng);
      RngStream stats_rng = base.derive("stats");
      const auto stats = hybrid::estimate_eps_stats(agent, trace.slice(0, slots), hcfg, stats_rng);
      const std::size_t selected =
          cfg.n_drl ? *cfg.n_drl : hybrid::select_n1(stats, cfg.n_total, cfg.m_sequences, trace.k_nodes());

      const std::string dir = out_dir(g, train, cfg.out_dir);
      {
        auto f = open_out(dir, "agent.bin");
        agent.save(f);
      }
      {
        auto f = open_out(dir, "train_stats.csv");
        hybrid::write_stats_csv(f, stats);
      }
      {
        auto f = open_out(dir, "train_slots.csv");
        hybrid::write_slot_results(f, run.outcomes, run.rewards);
      }
      {
        auto f = open_out(dir, "train_summary.csv");
        write_key_values(f, {{"k", std::to_string(trace.k_nodes())},
                             {"slots", std::to_string(slots)},
                             {"n1_train", std::to_string(n1_train)},
                             {"selected_n1", std::to_string(selected)},
                             {"epsilon", format_double(agent.epsilon().value)},
                             {"last_loss", format_double(run.last_loss)}});
      }
      out << "trained on " << slots << " slots; selected N1 = " << selected << '\n';
    } else if (eval->parsed()) {
      ExperimentConfig cfg = base_config(g);
      apply_cell_flags(cfg, eval_f, eval);
      agent::EnsembleAgent agent = agent::EnsembleAgent::load_file(eval_ckpt);
      const ActivityTrace trace = trace_for(cfg, eval_trace, g.seed);
      if (trace.k_nodes() != agent.k_nodes()) {
        throw std::runtime_error("trace has K=" + std::to_string(trace.k_nodes()) +
                                 " but the checkpoint has K=" + std::to_string(agent.k_nodes()));
      }
      const std::size_t end = eval_end == 0 ? trace.t_slots() : eval_end;
      if (eval_begin >= end || end > trace.t_slots()) {
        throw std::runtime_error("bad slot range [" + std::to_string(eval_begin) + ", " +
                                 std::to_string(end) + ")");
      }
      std::size_t n1 = cfg.n_total;
      if (cfg.n_drl) {
        n1 = *cfg.n_drl;
      } else if (!eval_stats.empty()) {
        n1 = hybrid::select_n1(load_stats(eval_stats), cfg.n_total, cfg.m_sequences, agent.k_nodes());
      }
      const hybrid::HybridConfig hcfg{cfg.n_total, n1, cfg.m_sequences};
      const RngStream base(g.seed);
      std::vector<agent::StateWindow> windows = agent.empty_windows();
      RngStream hrng = base.derive("eval-hybrid");
      const hybrid::HybridRun run = hybrid::run_hybrid(agent, trace, eval_begin, end, hcfg, windows,
                                                       {false, cfg.ground_truth_state}, hrng);
      RngStream rrng = base.derive("eval-ra");
      const auto ra_out = ra::run_ra_scheme(trace, eval_begin, end, {cfg.m_sequences, cfg.n_total}, rrng);
      const RateSeries hyb = average_packet_rate(run.outcomes, trace.k_nodes());
      const RateSeries ra_rate = average_packet_rate(ra_out, trace.k_nodes());
      const RateSeries genie = genie_rate(trace.slice(eval_begin, end), cfg.n_total);

      const std::string dir = out_dir(g, eval, cfg.out_dir);
      {
        auto f = open_out(dir, "eval_slots.csv");
        hybrid::write_slot_results(f, run.outcomes, run.rewards);
      }
      {
        auto f = open_out(dir, "eval_hybrid_rate.csv");
        hyb.write_csv(f);
      }
      {
        auto f = open_out(dir, "eval_ra_rate.csv");
        ra_rate.write_csv(f);
      }
      {
        auto f = open_out(dir, "eval_summary.csv");
        f << "scheme,rate\n"
          << "ra," << format_double(ra_rate.mean()) << '\n'
          << "hybrid," << format_double(hyb.mean()) << '\n'
          << "genie," << format_double(genie.mean()) << '\n'
          << "n1," << n1 << '\n';
      }
      out << "N1=" << n1 << " hybrid=" << format_double(hyb.mean())
          << " ra=" << format_double(ra_rate.mean()) << " genie=" << format_double(genie.mean()) << '\n';
    } else if (exp->parsed()) {
      if (g.config.empty()) {
        throw std::runtime_error("experiment needs --config");
      }
      const auto all = load_config_file(g.config);
      bool ran = false;
      for (ExperimentConfig cfg : all) {
        if (!g.name.empty() && cfg.name != g.name) {
          continue;
        }
        ran = true;
        cfg.out_dir = out_dir(g, exp, cfg.out_dir);
        if (given(exp, "--seed")) {
          cfg.seeds = {g.seed};
        }
        if (exp_threads > 0) {
          cfg.threads = exp_threads;
        }
        const ExperimentResult r = run_experiment(cfg);
        for (const auto& f : r.files) {
          out << "wrote " << f << '\n';
        }
      }
      if (!ran) {
        throw std::runtime_error(g.config + ": no section named '" + g.name + "'");
      }
    } else if (analyze->parsed()) {
      const auto stats = load_stats(an_stats);
      if (stats.empty()) {
        throw std::runtime_error(an_stats + ": no slots");
      }
      const std::string dir = out_dir(g, analyze, ".");
      auto f = open_out(dir, "analysis.csv");
      f << "n1,drl_stage,ra_stage,simulation_consistent,verbatim\n";
      for (std::size_t n1 = 0; n1 <= an_n; ++n1) {
        const hybrid::HybridConfig hcfg{an_n, n1, an_m};
        const auto terms = hybrid::analytic_hybrid_terms(stats, hcfg, an_k, ra::RateMode::simulation_consistent);
        double drl = 0.0, ras = 0.0;
        for (const auto& t : terms) {
          drl += t.drl;
          ras += t.ra;
        }
        drl /= static_cast<double>(terms.size());
        ras /= static_cast<double>(terms.size());
        const double verb = hybrid::analytic_hybrid_rate(stats, hcfg, an_k, ra::RateMode::verbatim).mean();
        f << n1 << ',' << format_double(drl) << ',' << format_double(ras) << ','
          << format_double(drl + ras) << ',' << format_double(verb) << '\n';
      }
      const std::size_t selected = hybrid::select_n1(stats, an_n, an_m, an_k);
      f << "selected_n1," << selected << '\n';
      out << "selected N1 = " << selected << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

} // namespace drlra::harness
