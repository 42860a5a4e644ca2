#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "wacps/phy.hpp"
#include "wacps/sim_core.hpp"

namespace wacps::ctrlmac {

struct RrmSlot {
  int c0 = 0;  // 0 idle, 1 granted, 2 contention
  int c1 = 0;  // data slot 1..l when c0 == 1, else 0
  int c2 = 0;  // data channel 1..m_d when c0 == 1, else 0

  bool operator==(const RrmSlot&) const = default;
};

struct Rrm {
  std::vector<RrmSlot> slots;
  int ftr = 0;

  bool operator==(const Rrm&) const = default;
};

struct RrmLayout {
  int k = 5;
  int l = 16;
  int m_d = 3;

  [[nodiscard]] int c1_bits() const;
  [[nodiscard]] int c2_bits() const;
  [[nodiscard]] int total_bits() const { return k * (2 + c1_bits() + c2_bits()) + 8; }
  [[nodiscard]] int total_bytes() const { return (total_bits() + 7) / 8; }
};

class RrmFormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bit layout, MSB first: per request slot c0 (2 bits), c1-1 (ceil(log2 l)
/// bits), c2-1 (ceil(log2 m_d) bits); then ftr (8 bits); zero-padded to a
/// byte boundary. Non-granted slots carry zero in the c1/c2 fields.
std::vector<std::uint8_t> encode_rrm(const Rrm& rrm, const RrmLayout& layout);
Rrm decode_rrm(std::span<const std::uint8_t> bytes, const RrmLayout& layout);

/// Uniform request slot in 1..k.
int choose_request_slot(RngStream& stream, int k);

/// Number of the RRM (counting from the next one as 1) at which a node whose
/// request collided retries: ftr + r - p.
int retransmit_wait_index(int ftr, int r, int p);

struct SlotRequest {
  int node = 0;
  int slot = 1;  // 1..k
};

struct Grant {
  int node = 0;
  int request_slot = 0;
  int c1 = 0;
  int c2 = 0;
};

/// Extra admission test for a (node, c1, c2) pair, e.g. per-channel duty
/// cycle or cross-round slot occupancy. Empty means every pair is usable.
using PairFilter = std::function<bool(int node, int c1, int c2)>;

struct GatewaySchedule {
  RrmLayout layout;
  int ftr = 0;
  std::uint64_t rounds = 0;
  std::uint64_t grants_total = 0;
  std::uint64_t contended_slots_total = 0;
  std::uint64_t deferred_total = 0;
};

struct RoundResult {
  Rrm rrm;
  std::vector<Grant> grants;
  int deferred = 0;  // single requesters with no free (slot, channel) pair
};

/// Resolves one request round. Pairs are handed out first-come-first-served
/// in request-slot order, scanning data slots before channels; a lone
/// requester with no admissible pair is reported as contention (c0 = 2) and
/// counted into the FTR.
RoundResult gateway_round(std::span<const SlotRequest> requests, GatewaySchedule& sched,
                          const PairFilter& usable = {});

struct Sample {
  double value = 0.0;
  Seconds generated = 0.0;
  std::int64_t event_id = -1;
};

enum class Phase { kIdle, kSyncing, kAwaitingRrm, kBackoff, kSending };

struct NodeMacState {
  Phase phase = Phase::kIdle;
  std::optional<Sample> pending;
  int request_slot = 0;
  int backoff_remaining = 0;
  int granted_c1 = 0;
  int granted_c2 = 0;
};

struct SendRequest {
  int slot;
};
struct SendData {
  int c1;
  int c2;
};
struct Wait {
  int n_rrm;
};
struct Sleep {};
using NodeAction = std::variant<SendRequest, SendData, Wait, Sleep>;

/// Stores a new sample, replacing (and returning) any older pending one.
std::optional<Sample> node_on_sample(NodeMacState& state, const Sample& sample);

/// Reaction to an RRM broadcast; `rrm` empty means the frame failed to decode.
NodeAction node_on_rrm(NodeMacState& state, const std::optional<Rrm>& rrm, RngStream& stream,
                       int k);

/// Called once the granted data frame has gone out; returns the sample sent.
Sample node_on_data_sent(NodeMacState& state);

inline constexpr int kMaxActuatorsPerFrame = kMaxPayloadBytes / 2;

struct ActuationEntry {
  std::uint8_t address = 0;
  std::uint8_t value = 0;
};

/// Splits the outbox into frames of 2 bytes per actuator (address, value).
/// `header_bytes` of framing overhead reduce the per-frame entry budget.
std::vector<std::vector<std::uint8_t>> build_actuation_frames(
    const std::map<int, std::uint8_t>& outbox, int header_bytes = 0);

std::vector<ActuationEntry> parse_actuation_frame(std::span<const std::uint8_t> frame,
                                                  int header_bytes = 0);

/// Earliest duty-cycle-legal start on a single gateway-owned channel.
class DownlinkScheduler {
 public:
  DownlinkScheduler(const ChannelPlan& plan, int channel_id);

  [[nodiscard]] Seconds earliest_start(Seconds now) const;
  /// Books a frame starting at `start` (>= earliest_start); returns its ToA.
  Seconds book(Seconds start, int payload_bytes);
  [[nodiscard]] Seconds next_allowed() const { return next_allowed_; }
  [[nodiscard]] int channel_id() const { return channel_id_; }

 private:
  const ChannelPlan* plan_;
  int channel_id_;
  double duty_cycle_;
  Seconds next_allowed_ = 0.0;
};

}  // namespace wacps::ctrlmac
