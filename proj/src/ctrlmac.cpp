#include "wacps/ctrlmac.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>
#include <string>

namespace wacps::ctrlmac {

namespace {

int ceil_log2(int x) {
  if (x <= 1) return 0;
  return static_cast<int>(std::bit_width(static_cast<unsigned>(x - 1)));
}

class BitWriter {
 public:
  void put(std::uint32_t value, int bits) {
    for (int b = bits - 1; b >= 0; --b) {
      if (pos_ % 8 == 0) bytes_.push_back(0);
      if ((value >> b) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (pos_ % 8));
      ++pos_;
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t get(int bits) {
    std::uint32_t v = 0;
    for (int b = 0; b < bits; ++b) {
      const std::size_t byte = pos_ / 8;
      if (byte >= bytes_.size()) throw RrmFormatError("truncated RRM");
      v = (v << 1) | ((bytes_[byte] >> (7 - pos_ % 8)) & 1u);
      ++pos_;
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void check_layout(const RrmLayout& layout) {
  if (layout.k < 1 || layout.l < 1 || layout.m_d < 1) {
    throw RrmFormatError("RRM layout needs k, l, m_d >= 1");
  }
}

}  // namespace

int RrmLayout::c1_bits() const { return ceil_log2(l); }
int RrmLayout::c2_bits() const { return ceil_log2(m_d); }

std::vector<std::uint8_t> encode_rrm(const Rrm& rrm, const RrmLayout& layout) {
  check_layout(layout);
  if (static_cast<int>(rrm.slots.size()) != layout.k) {
    throw RrmFormatError("RRM has " + std::to_string(rrm.slots.size()) + " slots, layout expects " +
                         std::to_string(layout.k));
  }
  if (rrm.ftr < 0 || rrm.ftr > 255) throw RrmFormatError("ftr out of range [0,255]");
  BitWriter w;
  for (const auto& s : rrm.slots) {
    if (s.c0 < 0 || s.c0 > 2) throw RrmFormatError("c0 out of range");
    if (s.c0 == 1) {
      if (s.c1 < 1 || s.c1 > layout.l) throw RrmFormatError("c1 out of range");
      if (s.c2 < 1 || s.c2 > layout.m_d) throw RrmFormatError("c2 out of range");
    } else if (s.c1 != 0 || s.c2 != 0) {
      throw RrmFormatError("c1/c2 must be zero unless c0 == 1");
    }
    w.put(static_cast<std::uint32_t>(s.c0), 2);
    w.put(s.c0 == 1 ? static_cast<std::uint32_t>(s.c1 - 1) : 0u, layout.c1_bits());
    w.put(s.c0 == 1 ? static_cast<std::uint32_t>(s.c2 - 1) : 0u, layout.c2_bits());
  }
  w.put(static_cast<std::uint32_t>(rrm.ftr), 8);
  return w.take();
}

Rrm decode_rrm(std::span<const std::uint8_t> bytes, const RrmLayout& layout) {
  check_layout(layout);
  if (static_cast<int>(bytes.size()) < layout.total_bytes()) throw RrmFormatError("truncated RRM");
  BitReader r(bytes);
  Rrm rrm;
  rrm.slots.resize(static_cast<std::size_t>(layout.k));
  for (auto& s : rrm.slots) {
    s.c0 = static_cast<int>(r.get(2));
    const int c1 = static_cast<int>(r.get(layout.c1_bits())) + 1;
    const int c2 = static_cast<int>(r.get(layout.c2_bits())) + 1;
    if (s.c0 == 3) throw RrmFormatError("invalid c0 value 3");
    if (s.c0 == 1) {
      if (c1 > layout.l || c2 > layout.m_d) throw RrmFormatError("grant out of range");
      s.c1 = c1;
      s.c2 = c2;
    }
  }
  rrm.ftr = static_cast<int>(r.get(8));
  return rrm;
}

int choose_request_slot(RngStream& stream, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return static_cast<int>(stream.uniform_int(1, k));
}

int retransmit_wait_index(int ftr, int r, int p) {
  if (ftr < 1) throw std::invalid_argument("ftr must be >= 1");
  if (p < 1 || r < 1 || p > r) throw std::invalid_argument("need 1 <= p <= r");
  return ftr + r - p;
}

RoundResult gateway_round(std::span<const SlotRequest> requests, GatewaySchedule& sched,
                          const PairFilter& usable) {
  const auto& lay = sched.layout;
  check_layout(lay);
  std::vector<std::vector<int>> by_slot(static_cast<std::size_t>(lay.k));
  for (const auto& req : requests) {
    if (req.slot < 1 || req.slot > lay.k) throw std::invalid_argument("request slot out of range");
    by_slot[static_cast<std::size_t>(req.slot - 1)].push_back(req.node);
  }

  RoundResult out;
  out.rrm.slots.resize(static_cast<std::size_t>(lay.k));
  std::vector<bool> taken(static_cast<std::size_t>(lay.l * lay.m_d), false);
  int contended = 0;
  for (int s = 0; s < lay.k; ++s) {
    const auto& nodes = by_slot[static_cast<std::size_t>(s)];
    auto& slot = out.rrm.slots[static_cast<std::size_t>(s)];
    if (nodes.empty()) continue;
    if (nodes.size() >= 2) {
      slot.c0 = 2;
      ++contended;
      continue;
    }
    const int node = nodes.front();
    bool granted = false;
    for (int c1 = 1; c1 <= lay.l && !granted; ++c1) {
      for (int c2 = 1; c2 <= lay.m_d; ++c2) {
        const auto idx = static_cast<std::size_t>((c1 - 1) * lay.m_d + (c2 - 1));
        if (taken[idx]) continue;
        if (usable && !usable(node, c1, c2)) continue;
        taken[idx] = true;
        slot = {1, c1, c2};
        out.grants.push_back({node, s + 1, c1, c2});
        granted = true;
        break;
      }
    }
    if (!granted) {
      slot.c0 = 2;
      ++contended;
      ++out.deferred;
    }
  }
  sched.ftr = std::max(sched.ftr - 1, 0) + contended;
  out.rrm.ftr = std::min(sched.ftr, 255);
  ++sched.rounds;
  sched.grants_total += out.grants.size();
  sched.contended_slots_total += static_cast<std::uint64_t>(contended);
  sched.deferred_total += static_cast<std::uint64_t>(out.deferred);
  return out;
}

std::optional<Sample> node_on_sample(NodeMacState& state, const Sample& sample) {
  std::optional<Sample> replaced = state.pending;
  state.pending = sample;
  if (state.phase == Phase::kIdle) state.phase = Phase::kSyncing;
  return replaced;
}

NodeAction node_on_rrm(NodeMacState& state, const std::optional<Rrm>& rrm, RngStream& stream,
                       int k) {
  if (!rrm) {
    // Lost sync: anything in flight restarts from the next decodable RRM.
    if (state.phase == Phase::kAwaitingRrm) state.phase = Phase::kSyncing;
    return Sleep{};
  }
  switch (state.phase) {
    case Phase::kIdle:
    case Phase::kSending:
      return Sleep{};
    case Phase::kSyncing: {
      state.request_slot = choose_request_slot(stream, k);
      state.phase = Phase::kAwaitingRrm;
      return SendRequest{state.request_slot};
    }
    case Phase::kBackoff: {
      if (--state.backoff_remaining > 0) return Wait{state.backoff_remaining};
      state.request_slot = choose_request_slot(stream, k);
      state.phase = Phase::kAwaitingRrm;
      return SendRequest{state.request_slot};
    }
    case Phase::kAwaitingRrm: {
      if (state.request_slot < 1 || state.request_slot > static_cast<int>(rrm->slots.size())) {
        state.phase = Phase::kSyncing;
        return Sleep{};
      }
      const auto& mine = rrm->slots[static_cast<std::size_t>(state.request_slot - 1)];
      if (mine.c0 == 1) {
        state.phase = Phase::kSending;
        state.granted_c1 = mine.c1;
        state.granted_c2 = mine.c2;
        return SendData{mine.c1, mine.c2};
      }
      if (mine.c0 == 2) {
        int r = 0;
        int p = 0;
        for (int s = 0; s < static_cast<int>(rrm->slots.size()); ++s) {
          if (rrm->slots[static_cast<std::size_t>(s)].c0 != 2) continue;
          ++r;
          if (s + 1 == state.request_slot) p = r;
        }
        const int wait = retransmit_wait_index(std::max(rrm->ftr, 1), r, p);
        state.phase = Phase::kBackoff;
        state.backoff_remaining = wait;
        return Wait{wait};
      }
      // c0 == 0: the gateway never heard the request; retry at the next RRM.
      state.phase = Phase::kBackoff;
      state.backoff_remaining = 1;
      return Wait{1};
    }
  }
  return Sleep{};
}

Sample node_on_data_sent(NodeMacState& state) {
  if (!state.pending) throw std::logic_error("data sent without a pending sample");
  Sample sent = *state.pending;
  state.pending.reset();
  state.phase = Phase::kIdle;
  state.granted_c1 = state.granted_c2 = 0;
  return sent;
}

std::vector<std::vector<std::uint8_t>> build_actuation_frames(
    const std::map<int, std::uint8_t>& outbox, int header_bytes) {
  if (header_bytes < 0 || header_bytes > kMaxPayloadBytes - 2) {
    throw std::invalid_argument("header_bytes out of range");
  }
  const std::size_t per_frame = static_cast<std::size_t>((kMaxPayloadBytes - header_bytes) / 2);
  std::vector<std::vector<std::uint8_t>> frames;
  for (const auto& [actuator, value] : outbox) {
    if (actuator < 0 || actuator > 255) throw std::invalid_argument("actuator address exceeds 1 byte");
    if (frames.empty() || frames.back().size() == static_cast<std::size_t>(header_bytes) + 2 * per_frame) {
      frames.emplace_back(static_cast<std::size_t>(header_bytes), std::uint8_t{0});
    }
    frames.back().push_back(static_cast<std::uint8_t>(actuator));
    frames.back().push_back(value);
  }
  return frames;
}

std::vector<ActuationEntry> parse_actuation_frame(std::span<const std::uint8_t> frame,
                                                  int header_bytes) {
  if (frame.size() < static_cast<std::size_t>(header_bytes) ||
      (frame.size() - static_cast<std::size_t>(header_bytes)) % 2 != 0) {
    throw std::invalid_argument("malformed actuation frame");
  }
  std::vector<ActuationEntry> out;
  for (std::size_t i = static_cast<std::size_t>(header_bytes); i + 1 < frame.size(); i += 2) {
    out.push_back({frame[i], frame[i + 1]});
  }
  return out;
}

DownlinkScheduler::DownlinkScheduler(const ChannelPlan& plan, int channel_id)
    : plan_(&plan), channel_id_(channel_id), duty_cycle_(plan.channel(channel_id).duty_cycle) {}

Seconds DownlinkScheduler::earliest_start(Seconds now) const { return std::max(now, next_allowed_); }

Seconds DownlinkScheduler::book(Seconds start, int payload_bytes) {
  if (start < next_allowed_) throw std::logic_error("downlink frame booked before duty-cycle release");
  const Seconds toa = time_on_air(payload_bytes, *plan_, channel_id_);
  next_allowed_ = start + toa + toa * (1.0 / duty_cycle_ - 1.0);
  return toa;
}

}  // namespace wacps::ctrlmac
