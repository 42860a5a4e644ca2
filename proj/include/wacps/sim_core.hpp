#pragma once

#include <cstdint>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace wacps {

/// Simulated time in seconds.
using Seconds = double;

enum class EventKind : std::uint8_t {
  kPlantSample,
  kRrmBroadcast,
  kTxStart,
  kTxEnd,
  kDcRelease,
  kDemandChange,
  kFaultToggle,
  kTrafficArrival,
  kAckTimeout,
  kActuationRelease,
  kAckRelease,
};

struct SimEvent {
  Seconds fire_time = 0.0;
  std::uint64_t sequence_no = 0;  // assigned by EventQueue::schedule
  EventKind kind = EventKind::kPlantSample;
  int target = 0;
  std::int64_t payload = 0;
};

class CausalityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Min-queue ordered by (fire_time, sequence_no). Popping advances now().
class EventQueue {
 public:
  void schedule(SimEvent ev);
  SimEvent pop();
  [[nodiscard]] const SimEvent& peek() const { return heap_.top(); }
  [[nodiscard]] bool empty() const { return heap_.empty(); }
  [[nodiscard]] std::size_t size() const { return heap_.size(); }
  [[nodiscard]] Seconds now() const { return now_; }
  void advance_to(Seconds t);

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.sequence_no > b.sequence_no;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  Seconds now_ = 0.0;
  std::uint64_t next_seq_ = 0;
};

struct UniformInt {
  std::int64_t lo;
  std::int64_t hi;
};
struct UniformReal {
  double lo;
  double hi;
};
struct Exponential {
  double mean;
};
struct Normal {
  double mean;
  double stddev;
};
using Distribution = std::variant<UniformInt, UniformReal, Exponential, Normal>;

/// Deterministic per-entity random stream. The engine state is derived from
/// (master seed, stream id) with splitmix64, so streams for different ids are
/// decorrelated and adding an entity never shifts another entity's draws.
///
/// Draws are computed from raw 64-bit engine output (not std::*_distribution)
/// so sequences are identical across standard library implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double unit();
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double uniform_real(double lo, double hi);
  double exponential(double mean);
  double normal(double mean, double stddev);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

/// Validates `dist` and draws one sample; throws std::invalid_argument for
/// b < a or a non-positive mean.
double draw(RngStream& stream, const Distribution& dist);

std::uint64_t splitmix64(std::uint64_t x);

/// Stable stream id for an entity class + index, e.g. stream_key("node", 3).
std::uint64_t stream_key(std::string_view role, std::uint64_t index);

}  // namespace wacps
