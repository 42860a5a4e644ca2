#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <variant>

#include "wacps/ctrlmac.hpp"
#include "wacps/phy.hpp"
#include "wacps/sim_core.hpp"

namespace wacps::lorawan {

using ctrlmac::Sample;

/// Framing overhead (MAC header, FHDR, FPort, MIC and similar) added to every
/// LoRaWAN frame. With an 8-byte sensor value the uplink is 36 B and a
/// one-actuator downlink 30 B, 0.149 s of airtime together at SF7/125 kHz.
inline constexpr int kFrameOverheadBytes = 28;

struct ConfirmedConfig {
  Seconds ack_timeout = 1.0;
  Seconds backoff_lo = 1.0;
  Seconds backoff_hi = 3.0;
  int max_attempts = 8;
};

/// Upper bound on the time a confirmed sample can stay in the retry loop.
Seconds max_retry_span(const ConfirmedConfig& cfg);

struct AlohaNodeState {
  std::optional<Sample> pending;  // newest sample not yet on air
  std::optional<Sample> in_flight;  // last sample sent, awaiting ack (confirmed only)
  int retry_count = 0;  // attempts made for the current sequence
  Seconds awaiting_ack_until = -1.0;
  bool attempt_scheduled = false;  // a (possibly DC-deferred) attempt is booked
};

/// Stores a newer sample; returns the one it replaced.
std::optional<Sample> on_sample(AlohaNodeState& state, const Sample& sample);

/// Uniform choice among the plan's uplink data channels.
int choose_uplink_channel(RngStream& rng, const ChannelPlan& plan);

struct AttemptPlan {
  int channel_id = 0;
  Seconds start = 0.0;  // >= now; later when the channel is duty-cycle gated
  Seconds toa = 0.0;
};

/// Picks a channel and the earliest duty-cycle-legal start for the next
/// attempt. Does not commit the duty cycle.
AttemptPlan plan_attempt(RngStream& rng, const ChannelPlan& plan, const DutyCycleState& dc, int node,
                         Seconds now, int payload_bytes);

/// Puts the pending sample on air: commits the duty cycle and returns the
/// transmission. Unconfirmed mode forgets the sample; confirmed mode keeps it
/// in flight and arms the ack timeout. Throws std::logic_error if nothing is
/// pending.
Transmission aloha_uplink(AlohaNodeState& state, DutyCycleState& dc, const ChannelPlan& plan, int node,
                          const AttemptPlan& attempt, int payload_bytes, bool confirmed,
                          const ConfirmedConfig& cfg, Sample* sent = nullptr);

struct Retry {
  Seconds at;
};
struct Dropped {
  Sample sample;
  std::optional<Seconds> restart_at;  // set when a newer sample is waiting
};
struct Done {};
using TimeoutOutcome = std::variant<Retry, Dropped, Done>;

/// Ack deadline passed without an ack. While attempts remain the node backs
/// off uniformly in [backoff_lo, backoff_hi]; a newer sample, if any, becomes
/// the payload of the retry. The attempt counter is not reset by the newer
/// sample. After max_attempts the in-flight sample is dropped and a pending
/// newer sample, if any, starts a fresh sequence at `restart_at`.
TimeoutOutcome on_ack_timeout(AlohaNodeState& state, RngStream& rng, Seconds now, const ConfirmedConfig& cfg);

/// Ack arrived. Returns the acknowledged sample; a pending newer sample is
/// left for the caller to send.
Sample on_ack(AlohaNodeState& state);

/// Frame for the gateway's actuation downlink: up to one frame's worth of the
/// outbox, removed from it. Empty outbox gives no frame.
struct DownlinkFrame {
  Transmission tx;
  std::vector<int> actuators;
  std::vector<std::uint8_t> payload;
};
std::optional<DownlinkFrame> gateway_actuation_downlink(std::map<int, std::uint8_t>& outbox, Seconds now,
                                                        ctrlmac::DownlinkScheduler& sched, int header_bytes);

}  // namespace wacps::lorawan
