#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wacps/lorawan.hpp"
#include "wacps/phy.hpp"
#include "wacps/plant.hpp"

namespace wacps {

enum class Protocol { kCtrlMac, kLoRaWan, kLoRaWanPP, kWired };

std::string_view to_string(Protocol p);
std::optional<Protocol> protocol_from_string(std::string_view s);

/// One DMA: tank parameters plus the DPETC sampling/trigger parameters.
struct SubsystemSpec {
  std::vector<plant::TankParams> tanks;
  plant::LqWeights lq;
  double h = 4.5;
  double sigma = 0.1;
  double rho = 1e-3;
  double tau_d = 0.0;
};

/// Relative demand fluctuation, Ornstein-Uhlenbeck per tank.
struct NoiseSpec {
  double stddev = 0.05;
  Seconds corr_time = 1000.0;
};

enum class PhaseMode { kZero, kRandom, kExplicit };

struct SensorSpec {
  double resolution = 5e-4;  // level quantization step, m (0 = none)
  PhaseMode phase = PhaseMode::kZero;
  std::vector<Seconds> offsets;  // per node, kExplicit only
};

struct MacSpec {
  int k = 5;
  Seconds t_slot = 0.1;
  int l = 16;
  double data_slot_factor = 1.1;  // data slot length / data frame ToA
  int data_bytes = 8;
  int request_bytes = 2;
};

struct LoRaWanSpec {
  lorawan::ConfirmedConfig confirmed;
  int header_bytes = lorawan::kFrameOverheadBytes;
  // true: acks draw on the actuation channel's duty-cycle budget and wait
  // behind actuation; false: the ack channel keeps its own budget.
  bool shared_downlink = false;
};

struct CaptureSpec {
  bool enabled = false;
  double snr_threshold_db = 7.0;
  double base_snr_db = 10.0;
  double snr_spread_db = 10.0;  // per-node SNR uniform in base +/- spread/2
  std::vector<double> node_snr_db;  // explicit per-node values override the draw
};

enum class TrafficPattern { kPeriodic, kExponential };

/// Network-only mode: synthetic sensor traffic, no plant.
struct TrafficSpec {
  bool enabled = false;
  int nodes = 10;
  TrafficPattern pattern = TrafficPattern::kPeriodic;
  Seconds interval = 10.0;  // period, or mean for exponential
};

struct ScenarioSpec {
  Protocol protocol = Protocol::kCtrlMac;
  Seconds duration = 9000.0;
  std::uint64_t seed = 1;
  std::vector<SubsystemSpec> subsystems;
  ChannelPlan plan = ChannelPlan::default_plan();
  plant::DemandProfile demand;
  double design_demand = 100.0;  // demand level the valve bias balances, %
  std::vector<int> fault_tanks{0};  // global tank indices affected by the leak
  NoiseSpec noise;
  SensorSpec sensors;
  MacSpec mac;
  LoRaWanSpec lorawan;
  CaptureSpec capture;
  TrafficSpec traffic;
  Seconds plant_step = 0.5;
  Seconds drain = 120.0;  // network keeps running after the last sample

  // Filled by finalize_scenario.
  std::vector<plant::SubsystemModel> models;

  [[nodiscard]] int node_count() const;
};

class ScenarioError : public std::invalid_argument {
 public:
  ScenarioError(const std::string& path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(path) {}
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Three DMAs of 3, 3 and 4 tanks.
std::vector<SubsystemSpec> default_subsystems(double h = 4.5, double sigma = 0.1);

/// Validates every field and builds the plant models. Throws ScenarioError
/// naming the offending field.
void finalize_scenario(ScenarioSpec& spec);

/// JSON document -> validated spec. Missing fields take defaults; unknown
/// keys and out-of-range values are errors.
ScenarioSpec parse_scenario(std::string_view json_text);

}  // namespace wacps
