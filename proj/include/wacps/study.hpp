#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wacps/metrics.hpp"
#include "wacps/scenario.hpp"

namespace wacps {

struct StudyOptions {
  std::uint64_t seed = 1;
  int seeds = 1;  // runs seeds seed .. seed+seeds-1
  bool capture = false;
};

/// One (protocol, h, sigma) configuration of a study. Wired cells carry
/// sigma < 0 since they do not trigger.
struct StudyCell {
  Protocol protocol = Protocol::kCtrlMac;
  double h = 4.5;
  double sigma = 0.1;
};

/// Studies 1-4: constant demand, tri-modal demand, leak fault, 10 DMAs.
std::vector<StudyCell> study_cells(int study);
/// Scenario for one cell; throws std::invalid_argument for an unknown study.
ScenarioSpec study_scenario(int study, const StudyCell& cell, std::uint64_t seed, bool capture = false);

/// 10 DMAs: eight of 3 tanks, two of 4.
std::vector<SubsystemSpec> large_subsystems(double h, double sigma);

struct NamedTable {
  std::string file;
  metrics::Table table;
};

/// Runs every cell for every seed. Study 3 adds a per-phase table.
std::vector<NamedTable> run_study(int study, const StudyOptions& opts);

/// Network-only sweep with synthetic traffic: periodic and exponential
/// inter-arrivals at 10 s and 50 s, 10..200 nodes, Ctrl-MAC and both
/// LoRaWAN variants.
struct SweepOptions {
  StudyOptions base;
  Seconds duration = 3600.0;
  std::vector<int> nodes{10, 50, 100, 150, 200};
  std::vector<Seconds> intervals{10.0, 50.0};
  std::vector<Protocol> protocols{Protocol::kCtrlMac, Protocol::kLoRaWan, Protocol::kLoRaWanPP};
};
ScenarioSpec sweep_scenario(Protocol p, int nodes, TrafficPattern pattern, Seconds interval, Seconds duration,
                            std::uint64_t seed, bool capture = false);
std::vector<NamedTable> run_sweep(const SweepOptions& opts);

/// Writes each table as <dir>/<file>; creates the directory.
void write_tables(const std::vector<NamedTable>& tables, const std::filesystem::path& dir);

}  // namespace wacps
