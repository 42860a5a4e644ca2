#include "wacps/phy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wacps {

const Channel& ChannelPlan::channel(int id) const {
  for (const auto& c : channels) {
    if (c.id == id) return c;
  }
  throw std::out_of_range("unknown channel id " + std::to_string(id));
}

std::vector<int> ChannelPlan::ids_with_role(ChannelRole role) const {
  std::vector<int> out;
  for (const auto& c : channels) {
    if (c.role == role) out.push_back(c.id);
  }
  return out;
}

void ChannelPlan::validate(bool require_ctrlmac_roles) const {
  if (channels.empty()) throw std::invalid_argument("channel plan is empty");
  if (spreading_factor < 6 || spreading_factor > 12) {
    throw std::invalid_argument("spreading factor out of range");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto& c = channels[i];
    if (!(c.duty_cycle > 0.0 && c.duty_cycle <= 1.0)) {
      throw std::invalid_argument("channel " + std::to_string(c.id) + ": duty cycle must be in (0,1]");
    }
    if (!(c.bandwidth_hz > 0.0)) {
      throw std::invalid_argument("channel " + std::to_string(c.id) + ": bandwidth must be positive");
    }
    for (std::size_t j = i + 1; j < channels.size(); ++j) {
      if (channels[j].id == c.id) throw std::invalid_argument("duplicate channel id");
    }
  }
  if (require_ctrlmac_roles) {
    if (ids_with_role(ChannelRole::kRequest).size() != 1) {
      throw std::invalid_argument("plan needs exactly one request channel");
    }
    if (ids_with_role(ChannelRole::kActuation).size() != 1) {
      throw std::invalid_argument("plan needs exactly one actuation channel");
    }
    if (ids_with_role(ChannelRole::kRrmAck).size() != 1) {
      throw std::invalid_argument("plan needs exactly one RRM/ack channel");
    }
    if (ids_with_role(ChannelRole::kData).empty()) {
      throw std::invalid_argument("plan needs at least one data channel");
    }
  }
}

ChannelPlan ChannelPlan::default_plan() {
  ChannelPlan p;
  p.channels = {
      {1, 125e3, Direction::kUplink, ChannelRole::kData, 0.01},
      {2, 125e3, Direction::kUplink, ChannelRole::kData, 0.01},
      {3, 125e3, Direction::kUplink, ChannelRole::kData, 0.01},
      {4, 125e3, Direction::kUplink, ChannelRole::kRequest, 0.10},
      {5, 125e3, Direction::kDownlink, ChannelRole::kRrmAck, 0.10},
      {6, 125e3, Direction::kDownlink, ChannelRole::kActuation, 0.10},
  };
  p.spreading_factor = 7;
  return p;
}

Seconds time_on_air(int payload_bytes, int sf, double bandwidth_hz) {
  if (payload_bytes < 1 || payload_bytes > kMaxPayloadBytes) {
    throw std::invalid_argument("payload must be in [1, 222] bytes, got " +
                                std::to_string(payload_bytes));
  }
  constexpr int kPreamble = 8;
  constexpr int kCodingRate = 1;  // 4/5
  constexpr int kCrc = 1;
  constexpr int kImplicitHeader = 0;
  constexpr int kLowDataRate = 0;
  const double t_sym = std::ldexp(1.0, sf) / bandwidth_hz;
  const double t_preamble = (kPreamble + 4.25) * t_sym;
  const int num = 8 * payload_bytes - 4 * sf + 28 + 16 * kCrc - 20 * kImplicitHeader;
  const int den = 4 * (sf - 2 * kLowDataRate);
  const int blocks = std::max((num + den - 1) / den, 0);
  const int n_payload = 8 + blocks * (kCodingRate + 4);
  return t_preamble + n_payload * t_sym;
}

Seconds time_on_air(int payload_bytes, const ChannelPlan& plan, int channel_id) {
  return time_on_air(payload_bytes, plan.spreading_factor, plan.channel(channel_id).bandwidth_hz);
}

GateResult DutyCycleState::gate(int node, int channel, double duty_cycle, Seconds now, Seconds toa) {
  if (!(toa > 0.0)) throw std::invalid_argument("duty_cycle_gate: toa must be positive");
  const Seconds next = next_allowed(node, channel);
  if (now >= next) {
    commit(node, channel, duty_cycle, now, toa);
    return {true, now};
  }
  return {false, next};
}

Seconds DutyCycleState::next_allowed(int node, int channel) const {
  auto it = next_.find({node, channel});
  return it == next_.end() ? 0.0 : it->second;
}

void DutyCycleState::commit(int node, int channel, double duty_cycle, Seconds start, Seconds toa) {
  const Seconds end = start + toa;
  next_[{node, channel}] = end + toa * (1.0 / duty_cycle - 1.0);
}

GateResult duty_cycle_gate(DutyCycleState& state, int node, const Channel& channel, Seconds now,
                           Seconds toa) {
  return state.gate(node, channel.id, channel.duty_cycle, now, toa);
}

namespace {

bool overlaps(const Transmission& a, const Transmission& b) {
  return a.channel_id == b.channel_id && a.start < b.end() && b.start < a.end();
}

}  // namespace

std::vector<DeliveryOutcome> resolve_deliveries(std::span<const Transmission> active,
                                                const CaptureConfig& capture) {
  std::vector<DeliveryOutcome> out(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    const auto& tx = active[i];
    bool any = false;
    bool strongest = capture.enabled && tx.snr_db.has_value();
    std::vector<double> interferers;  // SNR of overlapping frames, dB
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (i == j || !overlaps(tx, active[j])) continue;
      any = true;
      const double other = active[j].snr_db.value_or(tx.snr_db.value_or(0.0));
      if (!(tx.snr_db.value_or(0.0) > other)) strongest = false;
      interferers.push_back(other);
    }
    if (!any) {
      out[i] = {Delivery::kDelivered, tx.snr_db};
      continue;
    }
    if (!strongest) {
      out[i] = {Delivery::kCollided, std::nullopt};
      continue;
    }
    // Sorted summation keeps the result independent of input order.
    std::sort(interferers.begin(), interferers.end());
    double interference = 0.0;  // linear, relative to noise power
    for (double db : interferers) interference += std::pow(10.0, db / 10.0);
    const double sinr = 10.0 * std::log10(std::pow(10.0, *tx.snr_db / 10.0) / (1.0 + interference));
    out[i] = {sinr < capture.snr_threshold_db ? Delivery::kSuspectedCollision : Delivery::kDelivered,
              sinr};
  }
  return out;
}

double airtime_fraction(std::span<const Transmission> log, int node, int channel, Seconds t0,
                        Seconds t1) {
  double busy = 0.0;
  for (const auto& tx : log) {
    if (tx.src != node || tx.channel_id != channel) continue;
    const double a = std::max(t0, tx.start);
    const double b = std::min(t1, tx.end());
    if (b > a) busy += b - a;
  }
  return busy / (t1 - t0);
}

}  // namespace wacps
