#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "wacps/sim_core.hpp"

using namespace wacps;

TEST(EventQueue, PopsInTimeOrder) {
  EventQueue q;
  q.schedule({5.0, 0, EventKind::kPlantSample, 1, 0});
  q.schedule({3.0, 0, EventKind::kPlantSample, 2, 0});
  EXPECT_EQ(q.pop().fire_time, 3.0);
  EXPECT_EQ(q.pop().fire_time, 5.0);
  EXPECT_TRUE(q.empty());
}

TEST(EventQueue, TiesPopInInsertionOrder) {
  EventQueue q;
  q.schedule({3.0, 0, EventKind::kTxStart, 10, 0});
  q.schedule({3.0, 0, EventKind::kTxEnd, 20, 0});
  EXPECT_EQ(q.pop().target, 10);
  EXPECT_EQ(q.pop().target, 20);
}

TEST(EventQueue, RejectsPastEvents) {
  EventQueue q;
  q.schedule({2.0, 0, EventKind::kPlantSample, 0, 0});
  q.pop();
  EXPECT_THROW(q.schedule({q.now() - 1.0, 0, EventKind::kPlantSample, 0, 0}), CausalityError);
}

TEST(EventQueue, ClockIsMonotone) {
  EventQueue q;
  RngStream rng(7, 0);
  for (int i = 0; i < 1000; ++i) q.schedule({rng.uniform_real(0, 100), 0, EventKind::kTxEnd, i, 0});
  double last = -1;
  while (!q.empty()) {
    auto ev = q.pop();
    EXPECT_GE(ev.fire_time, last);
    last = ev.fire_time;
    if (ev.target % 3 == 0) q.schedule({last + 0.5, 0, EventKind::kTxEnd, 1, 0});
    if (q.size() > 3000) break;
  }
}

TEST(Draw, UniformIntFrequencies) {
  RngStream rng(1, 1);
  std::array<int, 5> counts{};
  constexpr int kN = 1'000'000;
  for (int i = 0; i < kN; ++i) ++counts[static_cast<std::size_t>(draw(rng, UniformInt{1, 5}) - 1)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / kN, 0.2, 0.01);
}

TEST(Draw, ExponentialMean) {
  RngStream rng(2, 9);
  constexpr int kN = 1'000'000;
  double sum = 0;
  for (int i = 0; i < kN; ++i) sum += draw(rng, Exponential{4.5});
  EXPECT_NEAR(sum / kN, 4.5, 4.5 * 0.02);
}

TEST(Draw, DegenerateUniformInt) {
  RngStream rng(3, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(draw(rng, UniformInt{3, 3}), 3);
}

TEST(Draw, InvalidParametersThrow) {
  RngStream rng(3, 3);
  EXPECT_THROW(draw(rng, UniformInt{5, 1}), std::invalid_argument);
  EXPECT_THROW(draw(rng, UniformReal{2.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(draw(rng, Exponential{0.0}), std::invalid_argument);
  EXPECT_THROW(draw(rng, Exponential{-1.0}), std::invalid_argument);
}

TEST(RngStream, ReplayAndIndependence) {
  RngStream a(42, stream_key("node", 3));
  RngStream b(42, stream_key("node", 3));
  RngStream c(42, stream_key("node", 4));
  int same = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    same += (x == c.next_u64());
  }
  EXPECT_EQ(same, 0);
}

TEST(RngStream, DistinctStreamsUncorrelated) {
  RngStream a(5, stream_key("node", 0));
  RngStream b(5, stream_key("node", 1));
  constexpr int kN = 200000;
  double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
  for (int i = 0; i < kN; ++i) {
    const double x = a.unit(), y = b.unit();
    sa += x; sb += y; sab += x * y; saa += x * x; sbb += y * y;
  }
  const double cov = sab / kN - (sa / kN) * (sb / kN);
  const double corr = cov / std::sqrt((saa / kN - sa * sa / kN / kN) * (sbb / kN - sb * sb / kN / kN));
  EXPECT_LT(std::abs(corr), 0.01);
}
