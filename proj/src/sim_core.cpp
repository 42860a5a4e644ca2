#include "wacps/sim_core.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace wacps {

void EventQueue::schedule(SimEvent ev) {
  if (!(ev.fire_time >= now_)) {
    throw CausalityError("event scheduled in the past: t=" + std::to_string(ev.fire_time) +
                         " now=" + std::to_string(now_));
  }
  ev.sequence_no = next_seq_++;
  heap_.push(ev);
}

SimEvent EventQueue::pop() {
  SimEvent ev = heap_.top();
  heap_.pop();
  now_ = ev.fire_time;
  return ev;
}

void EventQueue::advance_to(Seconds t) {
  if (t < now_) throw CausalityError("clock moved backwards");
  if (!heap_.empty() && heap_.top().fire_time < t) {
    throw CausalityError("advance_to skips pending events");
  }
  now_ = t;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::string_view role, std::uint64_t index) {
  // FNV-1a over the role name, then mixed with the index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : role) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h ^ splitmix64(index));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
  engine_.seed(seq);
}

double RngStream::unit() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());  // full 64-bit range
  // Lemire-style rejection keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

double RngStream::uniform_real(double lo, double hi) {
  if (hi < lo) throw std::invalid_argument("uniform_real: hi < lo");
  return lo + (hi - lo) * unit();
}

double RngStream::exponential(double mean) {
  if (!(mean > 0.0)) throw std::invalid_argument("exponential: mean must be positive");
  return -mean * std::log1p(-unit());
}

double RngStream::normal(double mean, double stddev) {
  if (stddev < 0.0) throw std::invalid_argument("normal: negative stddev");
  // Box-Muller; one variate per call keeps the stream stateless beyond the engine.
  double u1 = unit();
  while (u1 <= 0.0) u1 = unit();
  const double u2 = unit();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double draw(RngStream& stream, const Distribution& dist) {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformInt>) {
          return static_cast<double>(stream.uniform_int(d.lo, d.hi));
        } else if constexpr (std::is_same_v<T, UniformReal>) {
          return stream.uniform_real(d.lo, d.hi);
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return stream.exponential(d.mean);
        } else {
          return stream.normal(d.mean, d.stddev);
        }
      },
      dist);
}

}  // namespace wacps
