#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wacps/sim_core.hpp"

namespace wacps::metrics {

/// Life of one sensor event. Times are -1 until the step happens.
struct EventRecord {
  std::int64_t id = 0;
  int node = 0;
  Seconds generated = 0.0;
  Seconds ul_received = -1.0;  // first arrival at the gateway
  Seconds acked = -1.0;        // acknowledged by the gateway
  Seconds actuated = -1.0;     // first actuator update derived from it
  bool superseded = false;     // replaced by a newer value before it got through
  bool dropped = false;        // retry budget exhausted
  int attempts = 0;
};

struct PhaseWindow {
  std::string name;
  Seconds start = 0.0;
  Seconds end = 0.0;
};

struct TankRecord {
  int subsystem = 0;
  int tank = 0;
  double ref = 0.0;
  std::vector<double> phase_peak;  // highest level seen in each phase window
};

struct EventLog {
  std::string protocol;
  Seconds duration = 0.0;
  int nodes = 0;
  std::vector<EventRecord> events;
  std::vector<TankRecord> tanks;
  std::vector<PhaseWindow> phases;
  std::uint64_t acks_skipped = 0;  // acks that could not make the node's deadline
};

struct PhaseMetrics {
  std::string name;
  std::size_t events = 0;
  double events_per_minute = 0.0;
  double overshoot_pct = 0.0;
};

struct MetricsReport {
  bool empty = false;
  std::size_t events = 0;
  std::size_t ul_received = 0;
  std::size_t acked = 0;
  std::size_t actuated = 0;
  std::size_t drops = 0;
  std::size_t superseded = 0;
  double e2e_pdr = 0.0;  // %
  double e2e_delay_mean = 0.0;
  double e2e_delay_max = 0.0;
  double ul_reliability = 0.0;  // %, acked / actuated as defined
  bool ul_reliability_flag = false;  // ratio above 100 % or undefined
  double overshoot_pct = 0.0;
  bool critical = false;  // overshoot above 50 %
  double events_per_minute = 0.0;
  std::vector<PhaseMetrics> phases;
  std::vector<std::pair<int, double>> node_rtt_mean;  // node, mean generated->actuated
};

/// A log with no events and either no tanks or zero duration gives a zeroed
/// report with `empty` set.
MetricsReport compute_metrics(const EventLog& log);

/// Pooled gaps between consecutive events of all sensors generated in
/// [from, to).
std::vector<double> inter_event_times(const EventLog& log, Seconds from, Seconds to);

struct KsResult {
  std::size_t n = 0;
  double mean = 0.0;
  double d = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against an exponential with the sample
/// mean. p from the asymptotic Kolmogorov distribution with Stephens'
/// small-sample correction. Throws on fewer than 2 samples.
KsResult ks_exponential(std::span<const double> samples);

/// P[K > lambda] for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Six significant digits, locale independent. Throws std::logic_error on
/// NaN or infinity.
std::string format_number(double v);

std::vector<std::string> report_columns();
std::vector<std::string> report_cells(const MetricsReport& r);
/// One row per phase; columns phase, events, events_per_minute, overshoot_pct.
Table phase_table(const MetricsReport& r);

std::string to_csv(const Table& t);
/// Throws std::runtime_error when the file cannot be written.
void emit_csv(const Table& t, const std::filesystem::path& path);

}  // namespace wacps::metrics
