#include "wacps/lorawan.hpp"

#include <algorithm>
#include <stdexcept>

namespace wacps::lorawan {

Seconds max_retry_span(const ConfirmedConfig& cfg) {
  return cfg.max_attempts * (cfg.ack_timeout + cfg.backoff_hi);
}

std::optional<Sample> on_sample(AlohaNodeState& state, const Sample& sample) {
  auto old = state.pending;
  state.pending = sample;
  return old;
}

int choose_uplink_channel(RngStream& rng, const ChannelPlan& plan) {
  const auto ids = plan.ids_with_role(ChannelRole::kData);
  if (ids.empty()) throw std::invalid_argument("plan has no uplink data channels");
  return ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ids.size()) - 1))];
}

AttemptPlan plan_attempt(RngStream& rng, const ChannelPlan& plan, const DutyCycleState& dc, int node,
                         Seconds now, int payload_bytes) {
  AttemptPlan a;
  a.channel_id = choose_uplink_channel(rng, plan);
  a.start = std::max(now, dc.next_allowed(node, a.channel_id));
  a.toa = time_on_air(payload_bytes, plan, a.channel_id);
  return a;
}

Transmission aloha_uplink(AlohaNodeState& state, DutyCycleState& dc, const ChannelPlan& plan, int node,
                          const AttemptPlan& attempt, int payload_bytes, bool confirmed,
                          const ConfirmedConfig& cfg, Sample* sent) {
  if (!state.pending) throw std::logic_error("uplink attempt without a pending sample");
  const auto& ch = plan.channel(attempt.channel_id);
  const auto gate = dc.gate(node, ch.id, ch.duty_cycle, attempt.start, attempt.toa);
  if (!gate.allowed) throw std::logic_error("uplink attempt scheduled before duty-cycle release");
  if (sent) *sent = *state.pending;
  if (confirmed) {
    state.in_flight = state.pending;
    ++state.retry_count;
    state.awaiting_ack_until = attempt.start + attempt.toa + cfg.ack_timeout;
  }
  state.pending.reset();
  state.attempt_scheduled = false;
  Transmission tx;
  tx.channel_id = ch.id;
  tx.start = attempt.start;
  tx.toa = attempt.toa;
  tx.payload_bytes = payload_bytes;
  tx.src = node;
  tx.role = FrameRole::kData;
  return tx;
}

TimeoutOutcome on_ack_timeout(AlohaNodeState& state, RngStream& rng, Seconds now, const ConfirmedConfig& cfg) {
  state.awaiting_ack_until = -1.0;
  if (!state.in_flight) return Done{};
  if (state.retry_count >= cfg.max_attempts) {
    Dropped d{*state.in_flight, std::nullopt};
    state.in_flight.reset();
    state.retry_count = 0;
    if (state.pending) d.restart_at = now;
    return d;
  }
  // Retransmit the newest value; the in-flight one is superseded if a newer exists.
  if (!state.pending) state.pending = state.in_flight;
  state.in_flight.reset();
  return Retry{now + rng.uniform_real(cfg.backoff_lo, cfg.backoff_hi)};
}

Sample on_ack(AlohaNodeState& state) {
  if (!state.in_flight) throw std::logic_error("ack without a sample in flight");
  Sample acked = *state.in_flight;
  state.in_flight.reset();
  state.retry_count = 0;
  state.awaiting_ack_until = -1.0;
  return acked;
}

std::optional<DownlinkFrame> gateway_actuation_downlink(std::map<int, std::uint8_t>& outbox, Seconds now,
                                                        ctrlmac::DownlinkScheduler& sched, int header_bytes) {
  if (outbox.empty()) return std::nullopt;
  const int budget = (kMaxPayloadBytes - header_bytes) / 2;
  if (budget < 1) throw std::invalid_argument("header leaves no room for actuation entries");
  std::map<int, std::uint8_t> take;
  for (auto it = outbox.begin(); it != outbox.end() && static_cast<int>(take.size()) < budget;) {
    take.insert(*it);
    it = outbox.erase(it);
  }
  auto frames = ctrlmac::build_actuation_frames(take, header_bytes);
  DownlinkFrame f;
  f.payload = std::move(frames.front());
  for (const auto& [a, v] : take) f.actuators.push_back(a);
  f.tx.channel_id = sched.channel_id();
  f.tx.start = sched.earliest_start(now);
  f.tx.toa = sched.book(f.tx.start, static_cast<int>(f.payload.size()));
  f.tx.payload_bytes = static_cast<int>(f.payload.size());
  f.tx.src = -1;
  f.tx.role = FrameRole::kActuation;
  return f;
}

}  // namespace wacps::lorawan
