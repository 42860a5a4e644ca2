#include "wacps/study.hpp"

#include <stdexcept>

#include "wacps/simulator.hpp"

namespace wacps {

namespace {

std::string sigma_cell(const StudyCell& c) {
  return c.sigma < 0.0 ? "-" : metrics::format_number(c.sigma);
}

std::vector<std::string> with_report(std::vector<std::string> head, const metrics::MetricsReport& r) {
  auto cells = metrics::report_cells(r);
  head.insert(head.end(), cells.begin(), cells.end());
  return head;
}

std::vector<std::string> with_columns(std::vector<std::string> head) {
  auto cols = metrics::report_columns();
  head.insert(head.end(), cols.begin(), cols.end());
  return head;
}

}  // namespace

std::vector<SubsystemSpec> large_subsystems(double h, double sigma) {
  std::vector<SubsystemSpec> out;
  for (int d = 0; d < 10; ++d) {
    SubsystemSpec s;
    s.tanks.assign(d < 8 ? 3 : 4, plant::TankParams{});
    s.h = h;
    s.sigma = sigma;
    out.push_back(s);
  }
  return out;
}

std::vector<StudyCell> study_cells(int study) {
  std::vector<StudyCell> cells;
  auto wireless = [&](std::initializer_list<std::pair<double, double>> grid) {
    for (auto p : {Protocol::kCtrlMac, Protocol::kLoRaWanPP}) {
      for (const auto& [h, s] : grid) cells.push_back({p, h, s});
    }
  };
  auto wired = [&](std::initializer_list<double> hs) {
    for (double h : hs) cells.push_back({Protocol::kWired, h, -1.0});
  };
  switch (study) {
    case 1:
      wireless({{1.0, 0.1}, {4.5, 0.01}, {4.5, 0.1}, {4.5, 0.3}, {10.0, 0.1}});
      wired({1.0, 4.5, 10.0});
      break;
    case 2:
    case 3:
      wireless({{4.5, 0.1}, {4.5, 0.3}});
      wired({4.5});
      break;
    case 4:
      wireless({{1.0, 0.1}, {4.5, 0.1}});
      wired({1.0, 4.5});
      break;
    default:
      throw std::invalid_argument("unknown study " + std::to_string(study) + " (expected 1-4)");
  }
  return cells;
}

ScenarioSpec study_scenario(int study, const StudyCell& cell, std::uint64_t seed, bool capture) {
  ScenarioSpec s;
  s.protocol = cell.protocol;
  s.seed = seed;
  s.sensors.phase = PhaseMode::kRandom;
  s.capture.enabled = capture;
  const double sigma = cell.sigma < 0.0 ? 0.0 : cell.sigma;
  s.subsystems = default_subsystems(cell.h, sigma);
  switch (study) {
    case 1:
      s.duration = 9000.0;
      break;
    case 2:
      s.duration = 86400.0;
      s.demand.kind = plant::DemandKind::kTrimodal;
      break;
    case 3:
      s.duration = 9000.0;
      s.demand.kind = plant::DemandKind::kFault;
      s.demand.base = plant::DemandKind::kConstant;
      s.demand.level = 70.0;
      s.demand.leak = 30.0;
      s.demand.fault_start = 3000.0;
      s.demand.fault_end = 6000.0;
      s.design_demand = 70.0;
      s.fault_tanks = {0};
      break;
    case 4:
      s.duration = 10000.0;
      s.subsystems = large_subsystems(cell.h, sigma);
      break;
    default:
      throw std::invalid_argument("unknown study " + std::to_string(study) + " (expected 1-4)");
  }
  finalize_scenario(s);
  return s;
}

std::vector<NamedTable> run_study(int study, const StudyOptions& opts) {
  const auto cells = study_cells(study);
  const std::string stem = "study" + std::to_string(study);
  NamedTable main{stem + ".csv", {}};
  main.table.columns = with_columns({"protocol", "h", "sigma", "seed"});
  NamedTable phases{stem + "_phases.csv", {}};
  phases.table.columns = {"protocol", "h", "sigma", "seed", "phase", "events", "events_per_min", "overshoot_pct"};

  for (int k = 0; k < opts.seeds; ++k) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(k);
    for (const auto& c : cells) {
      const auto r = run_scenario(study_scenario(study, c, seed, opts.capture));
      std::vector<std::string> head{std::string(to_string(c.protocol)), metrics::format_number(c.h), sigma_cell(c),
                                    std::to_string(seed)};
      main.table.rows.push_back(with_report(head, r.report));
      for (const auto& row : metrics::phase_table(r.report).rows) {
        auto line = head;
        line.insert(line.end(), row.begin(), row.end());
        phases.table.rows.push_back(std::move(line));
      }
    }
  }
  std::vector<NamedTable> out{std::move(main)};
  if (study == 3) out.push_back(std::move(phases));
  return out;
}

ScenarioSpec sweep_scenario(Protocol p, int nodes, TrafficPattern pattern, Seconds interval, Seconds duration,
                            std::uint64_t seed, bool capture) {
  ScenarioSpec s;
  s.protocol = p;
  s.seed = seed;
  s.duration = duration;
  s.capture.enabled = capture;
  s.traffic.enabled = true;
  s.traffic.nodes = nodes;
  s.traffic.pattern = pattern;
  s.traffic.interval = interval;
  finalize_scenario(s);
  return s;
}

std::vector<NamedTable> run_sweep(const SweepOptions& opts) {
  NamedTable t{"network_sweep.csv", {}};
  t.table.columns = with_columns({"traffic", "protocol", "nodes", "seed"});
  for (int k = 0; k < opts.base.seeds; ++k) {
    const std::uint64_t seed = opts.base.seed + static_cast<std::uint64_t>(k);
    for (auto pattern : {TrafficPattern::kPeriodic, TrafficPattern::kExponential}) {
      for (Seconds iv : opts.intervals) {
        const std::string label =
            (pattern == TrafficPattern::kPeriodic ? "P(" : "E(") + metrics::format_number(iv) + "s)";
        for (auto p : opts.protocols) {
          for (int n : opts.nodes) {
            const auto r = run_scenario(sweep_scenario(p, n, pattern, iv, opts.duration, seed, opts.base.capture));
            t.table.rows.push_back(
                with_report({label, std::string(to_string(p)), std::to_string(n), std::to_string(seed)}, r.report));
          }
        }
      }
    }
  }
  return {t};
}

void write_tables(const std::vector<NamedTable>& tables, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : tables) metrics::emit_csv(t.table, dir / t.file);
}

}  // namespace wacps
