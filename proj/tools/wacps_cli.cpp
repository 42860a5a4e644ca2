// wacps: command-line front end for the co-simulator and the analysis kit.
//
//   wacps simulate configs/study1_ctrlmac.json --out-dir out
//   wacps study 3 --seeds 5 --out-dir out
//   wacps analyze-queue --lambda-grid 12,60,136,150
//   wacps stability --system configs/study1_ctrlmac.json

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "wacps/queueing.hpp"
#include "wacps/simulator.hpp"
#include "wacps/stability.hpp"
#include "wacps/study.hpp"

using namespace wacps;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2, kDiverged = 3 };

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("$", "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string num(double v) { return metrics::format_number(v); }

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool capture = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Root seed (overrides the config)");
  app->add_option("--out-dir", c.out_dir, "Directory for CSV output")->capture_default_str();
  app->add_flag("--capture-mode", c.capture, "Enable the LoRa capture effect");
}

int cmd_simulate(const std::string& config, const Common& c, double trace) {
  auto spec = load_scenario(config);
  if (c.seed) spec.seed = *c.seed;
  if (c.capture) spec.capture.enabled = true;
  finalize_scenario(spec);

  SimOptions opts;
  opts.trace_interval = trace;
  const auto r = run_scenario(spec, opts);

  std::vector<NamedTable> tables;
  tables.push_back({"report.csv", {metrics::report_columns(), {metrics::report_cells(r.report)}}});
  if (r.report.phases.size() > 1) tables.push_back({"phases.csv", metrics::phase_table(r.report)});
  if (!r.trace.empty()) {
    NamedTable t{"trace.csv", {{"t"}, {}}};
    for (std::size_t i = 0; i < r.trace.front().levels.size(); ++i) t.table.columns.push_back("tank" + std::to_string(i));
    for (const auto& p : r.trace) {
      std::vector<std::string> row{num(p.t)};
      for (double l : p.levels) row.push_back(num(l));
      t.table.rows.push_back(std::move(row));
    }
    tables.push_back(std::move(t));
  }
  write_tables(tables, c.out_dir);

  const auto& m = r.report;
  std::printf("%s seed %llu: events/min %.2f  overshoot %.3f%%  PDR %.2f%%  delay %.3f s (max %.2f)  UL %.1f%%%s\n",
              std::string(to_string(spec.protocol)).c_str(), static_cast<unsigned long long>(spec.seed),
              m.events_per_minute, m.overshoot_pct, m.e2e_pdr, m.e2e_delay_mean, m.e2e_delay_max, m.ul_reliability,
              m.ul_reliability_flag ? " (flagged)" : "");
  return kOk;
}

int cmd_study(const std::string& which, const Common& c, int seeds) {
  StudyOptions o;
  o.seed = c.seed.value_or(1);
  o.seeds = seeds;
  o.capture = c.capture;
  std::vector<NamedTable> tables;
  if (which == "net") {
    SweepOptions s;
    s.base = o;
    tables = run_sweep(s);
  } else {
    int id = 0;
    try {
      id = std::stoi(which);
    } catch (const std::exception&) {
      throw ScenarioError("study", "expected 1, 2, 3, 4 or net");
    }
    if (id < 1 || id > 4) throw ScenarioError("study", "expected 1, 2, 3, 4 or net");
    tables = run_study(id, o);
  }
  write_tables(tables, c.out_dir);
  for (const auto& t : tables) std::printf("wrote %s (%zu rows)\n", (std::filesystem::path(c.out_dir) / t.file).c_str(), t.table.rows.size());
  return kOk;
}

int cmd_queue(const std::vector<double>& lambdas, const std::vector<double>& xs, const queueing::RoundConfig& rc,
              const std::string& out_dir) {
  NamedTable t{"queue.csv", {{"lambda_ppm", "x_s", "p_req", "mean_wait_s", "q99_s"}, {}}};
  for (double l : lambdas) {
    const double lam = queueing::per_round(l, rc.round_s());
    for (double x : xs) {
      const auto d = queueing::request_delay_probability(lam, rc.k, x, rc.round_s());
      t.table.rows.push_back({num(l), num(x), num(d.probability), num(d.mean_wait_s),
                              num(queueing::request_delay_quantile(lam, rc.k, 0.99, rc.round_s()))});
    }
  }
  write_tables({t}, out_dir);
  std::cout << metrics::to_csv(t.table);

  queueing::BudgetInputs in;
  in.rounds = rc;
  const auto b = queueing::compute_budget(in);
  const auto total = queueing::mac_delay_bounds(b);
  std::printf("t_sync [%.3f, %.3f]  t_req [%.3f, %.3f]  t_send [%.3f, %.3f]  t_update [%.3f, %.3f]  total [%.3f, %.3f] s\n",
              b.t_sync.lo, b.t_sync.hi, b.t_req.lo, b.t_req.hi, b.t_send.lo, b.t_send.hi, b.t_update.lo,
              b.t_update.hi, total.lo, total.hi);
  return kOk;
}

int cmd_stability(const std::string& config, int steps, const std::string& out_dir) {
  const auto spec = load_scenario(config);
  NamedTable t{"stability.csv", {{"subsystem", "states", "h", "sigma", "rho", "spectral_radius", "max_tau_d", "monotone"}, {}}};
  for (std::size_t i = 0; i < spec.models.size(); ++i) {
    const auto& m = spec.models[i];
    const auto sys = stability::build_augmented(m.A, m.B, m.K, m.sigma, m.rho, m.h, 0.0);
    std::vector<double> grid;
    for (int s = 0; s < steps; ++s) grid.push_back(m.h * s / steps);
    const auto fr = stability::max_allowable_delay(sys, grid);
    t.table.rows.push_back({std::to_string(i), std::to_string(m.n()), num(m.h), num(m.sigma), num(m.rho),
                            num(stability::spectral_radius_oracle(sys)), fr.max_tau < 0 ? "none" : num(fr.max_tau),
                            fr.monotone ? "1" : "0"});
  }
  write_tables({t}, out_dir);
  std::cout << metrics::to_csv(t.table);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wide-area CPS co-simulator: Ctrl-MAC, LoRaWAN baselines, event-triggered control"};
  app.require_subcommand(1);

  Common common;
  std::string config;
  double trace = 0.0;
  auto* sim = app.add_subcommand("simulate", "Run one scenario from a JSON config");
  sim->add_option("config", config, "Scenario JSON")->required();
  sim->add_option("--trace", trace, "Write tank levels every N seconds (0 = off)");
  add_common(sim, common);

  std::string which;
  int seeds = 1;
  auto* study = app.add_subcommand("study", "Run a predefined study (1-4) or the network sweep (net)");
  study->add_option("id", which, "1, 2, 3, 4 or net")->required();
  study->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  add_common(study, common);

  std::vector<double> lambdas{12, 60, 136, 150};
  std::vector<double> xs{1, 5, 10};
  queueing::RoundConfig rc;
  auto* queue = app.add_subcommand("analyze-queue", "Closed-form request delay and MAC delay budget");
  queue->add_option("--lambda-grid", lambdas, "Loads in packets per minute")->delimiter(',');
  queue->add_option("--x", xs, "Delay thresholds in seconds")->delimiter(',');
  queue->add_option("--k", rc.k, "Request slots per round")->check(CLI::PositiveNumber);
  queue->add_option("--t-slot", rc.t_slot, "Request slot length, s")->check(CLI::PositiveNumber);
  queue->add_option("--out-dir", common.out_dir, "Directory for CSV output");

  int steps = 10;
  auto* stab = app.add_subcommand("stability", "Largest certified delay bound per subsystem");
  stab->add_option("--system", config, "Scenario JSON")->required();
  stab->add_option("--tau-steps", steps, "Grid points in [0, h)")->check(CLI::PositiveNumber);
  stab->add_option("--out-dir", common.out_dir, "Directory for CSV output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(config, common, trace);
    if (*study) return cmd_study(which, common, seeds);
    if (*queue) return cmd_queue(lambdas, xs, rc, common.out_dir);
    if (*stab) return cmd_stability(config, steps, common.out_dir);
  } catch (const ScenarioError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kInvalid;
  } catch (const plant::DivergenceError& e) {
    std::cerr << "plant diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const queueing::UnstableLoadError& e) {
    std::cerr << "unstable load: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
