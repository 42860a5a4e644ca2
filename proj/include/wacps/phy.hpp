#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wacps/sim_core.hpp"

namespace wacps {

enum class Direction { kUplink, kDownlink };
enum class ChannelRole { kRequest, kData, kRrmAck, kActuation };

inline constexpr int kMaxPayloadBytes = 222;

struct Channel {
  int id = 0;
  double bandwidth_hz = 125e3;
  Direction direction = Direction::kUplink;
  ChannelRole role = ChannelRole::kData;
  double duty_cycle = 0.01;
};

struct ChannelPlan {
  std::vector<Channel> channels;
  int spreading_factor = 7;

  [[nodiscard]] const Channel& channel(int id) const;
  [[nodiscard]] std::vector<int> ids_with_role(ChannelRole role) const;
  /// Throws std::invalid_argument if any invariant is violated.
  void validate(bool require_ctrlmac_roles) const;

  /// 3 x 125 kHz uplink data channels at 1 %, one 125 kHz request channel at
  /// 10 %, and the 250 kHz downlink split into 125 kHz RRM/ack + 125 kHz
  /// actuation halves, each at 10 %.
  static ChannelPlan default_plan();
};

enum class FrameRole { kRequest, kData, kRrm, kAck, kActuation };

struct Transmission {
  int channel_id = 0;
  Seconds start = 0.0;
  Seconds toa = 0.0;
  int payload_bytes = 0;
  int src = 0;
  FrameRole role = FrameRole::kData;
  std::optional<double> snr_db;

  [[nodiscard]] Seconds end() const { return start + toa; }
};

/// LoRa time on air: SF from the plan, coding rate 4/5, 8 preamble symbols,
/// explicit header, CRC on, low-data-rate optimisation off.
Seconds time_on_air(int payload_bytes, const ChannelPlan& plan, int channel_id);
Seconds time_on_air(int payload_bytes, int spreading_factor, double bandwidth_hz);

struct GateResult {
  bool allowed = false;
  Seconds retry_at = 0.0;
};

/// Per (node, channel) earliest legal start. After a frame of length toa ends
/// at t_end on a channel with duty cycle d: next = t_end + toa * (1/d - 1).
class DutyCycleState {
 public:
  GateResult gate(int node, int channel, double duty_cycle, Seconds now, Seconds toa);
  [[nodiscard]] Seconds next_allowed(int node, int channel) const;
  /// Records a transmission without checking (caller already knows it is legal).
  void commit(int node, int channel, double duty_cycle, Seconds start, Seconds toa);

 private:
  std::map<std::pair<int, int>, Seconds> next_;
};

GateResult duty_cycle_gate(DutyCycleState& state, int node, const Channel& channel, Seconds now,
                           Seconds toa);

enum class Delivery { kDelivered, kCollided, kSuspectedCollision };

struct CaptureConfig {
  bool enabled = false;
  double snr_threshold_db = 7.0;
};

struct DeliveryOutcome {
  Delivery status = Delivery::kDelivered;
  /// Signal to noise-plus-interference of a captured frame.
  std::optional<double> decoded_snr_db;

  bool operator==(const DeliveryOutcome&) const = default;
};

/// Outcome per input transmission (same order as `active`). With capture off,
/// two frames collide iff they share a channel and their airtime intervals
/// overlap. With capture on, the strictly strongest frame of an overlapping
/// set survives with SINR as its decoded SNR, flagged when that falls below
/// the threshold. The result does not depend on input order.
std::vector<DeliveryOutcome> resolve_deliveries(std::span<const Transmission> active,
                                                const CaptureConfig& capture = {});

/// Long-run fraction of time `node` spent transmitting on `channel` inside
/// [t0, t1].
double airtime_fraction(std::span<const Transmission> log, int node, int channel, Seconds t0,
                        Seconds t1);

}  // namespace wacps
