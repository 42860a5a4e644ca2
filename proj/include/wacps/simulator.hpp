#pragma once

#include <vector>

#include "wacps/metrics.hpp"
#include "wacps/phy.hpp"
#include "wacps/scenario.hpp"

namespace wacps {

struct SimOptions {
  bool keep_frames = false;      // fill RunResult::frames
  Seconds trace_interval = 0.0;  // > 0: sample all tank levels on this grid
};

struct TracePoint {
  Seconds t = 0.0;
  std::vector<double> levels;  // absolute, global tank order
};

struct RunResult {
  metrics::EventLog log;
  metrics::MetricsReport report;
  std::vector<Transmission> frames;
  std::vector<TracePoint> trace;
  std::uint64_t rrm_rounds = 0;
  std::uint64_t collisions = 0;
};

/// Runs one closed-loop (or network-only) scenario to completion. Sensors
/// stop at spec.duration; the network keeps going for spec.drain seconds so
/// in-flight events can finish. Throws plant::DivergenceError if a plant
/// state stops being finite.
RunResult run_scenario(const ScenarioSpec& spec, const SimOptions& opts = {});

}  // namespace wacps
