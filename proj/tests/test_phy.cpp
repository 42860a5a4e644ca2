#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "wacps/phy.hpp"

using namespace wacps;

namespace {

// Symbol-count form of the LoRa airtime formula, evaluated in floating point.
double toa_oracle(int bytes, int sf, double bw) {
  const double ts = std::pow(2.0, sf) / bw;
  const double blocks = std::max(std::ceil((8.0 * bytes - 4.0 * sf + 28 + 16) / (4.0 * sf)), 0.0);
  return (8 + 4.25) * ts + (8 + blocks * 5) * ts;
}

Transmission tx(int ch, double start, double end, std::optional<double> snr = std::nullopt) {
  Transmission t;
  t.channel_id = ch;
  t.start = start;
  t.toa = end - start;
  t.payload_bytes = 8;
  t.snr_db = snr;
  return t;
}

}  // namespace

TEST(TimeOnAir, TwelveBytes) {
  const auto plan = ChannelPlan::default_plan();
  const double toa = time_on_air(12, plan, 1);
  EXPECT_NEAR(toa, toa_oracle(12, 7, 125e3), 1e-12);
  EXPECT_NEAR(toa, 0.0413, 5e-4);
}

TEST(TimeOnAir, MatchesOracleOverRange) {
  for (int b = 1; b <= 222; ++b) EXPECT_NEAR(time_on_air(b, 7, 125e3), toa_oracle(b, 7, 125e3), 1e-12);
}

TEST(TimeOnAir, DoubleBandwidthHalves) {
  EXPECT_NEAR(time_on_air(20, 7, 250e3), time_on_air(20, 7, 125e3) / 2, 1e-15);
}

TEST(TimeOnAir, RejectsOversizePayload) {
  EXPECT_THROW(time_on_air(223, 7, 125e3), std::invalid_argument);
  EXPECT_THROW(time_on_air(0, 7, 125e3), std::invalid_argument);
}

TEST(ChannelPlan, DefaultPlanValid) {
  const auto plan = ChannelPlan::default_plan();
  EXPECT_NO_THROW(plan.validate(true));
  EXPECT_EQ(plan.ids_with_role(ChannelRole::kData).size(), 3u);
  for (int id : plan.ids_with_role(ChannelRole::kData)) EXPECT_DOUBLE_EQ(plan.channel(id).duty_cycle, 0.01);
  EXPECT_DOUBLE_EQ(plan.channel(plan.ids_with_role(ChannelRole::kRequest)[0]).duty_cycle, 0.10);
  auto bad = plan;
  bad.channels[0].duty_cycle = 0.0;
  EXPECT_THROW(bad.validate(true), std::invalid_argument);
}

TEST(DutyCycle, OnePercent) {
  DutyCycleState s;
  Channel ch{1, 125e3, Direction::kUplink, ChannelRole::kData, 0.01};
  auto g = duty_cycle_gate(s, 0, ch, 0.0, 0.05);
  EXPECT_TRUE(g.allowed);
  EXPECT_NEAR(s.next_allowed(0, 1), 5.0, 1e-12);
  auto g2 = duty_cycle_gate(s, 0, ch, 1.0, 0.05);
  EXPECT_FALSE(g2.allowed);
  EXPECT_NEAR(g2.retry_at, 5.0, 1e-12);
}

TEST(DutyCycle, TenPercent) {
  DutyCycleState s;
  Channel ch{5, 125e3, Direction::kDownlink, ChannelRole::kRrmAck, 0.10};
  EXPECT_TRUE(duty_cycle_gate(s, 0, ch, 0.0, 0.05).allowed);
  EXPECT_NEAR(s.next_allowed(0, 5), 0.5, 1e-12);
}

TEST(DutyCycle, AirtimeNeverExceedsBudget) {
  DutyCycleState s;
  Channel ch{1, 125e3, Direction::kUplink, ChannelRole::kData, 0.01};
  RngStream rng(11, 0);
  std::vector<Transmission> log;
  double t = 0;
  const double max_toa = time_on_air(40, 7, 125e3);
  while (t < 2000 * max_toa * 100) {
    const double toa = time_on_air(static_cast<int>(rng.uniform_int(1, 40)), 7, 125e3);
    auto g = duty_cycle_gate(s, 0, ch, t, toa);
    if (g.allowed) {
      log.push_back(tx(1, t, t + toa));
      log.back().src = 0;
      t += toa;
    } else {
      t = g.retry_at;
    }
  }
  // Any window of at least 100 max-ToA, starting at a transmission start.
  for (std::size_t i = 0; i < log.size(); i += 7) {
    const double t0 = log[i].start;
    const double t1 = t0 + 100 * max_toa * (1 + static_cast<double>(i % 5));
    EXPECT_LE(airtime_fraction(log, 0, 1, t0, t1), 0.01 + max_toa / (t1 - t0));
  }
  EXPECT_LE(airtime_fraction(log, 0, 1, 0.0, t), 0.01 + 1e-12);
}

TEST(Collisions, OverlapCollides) {
  std::vector<Transmission> v{tx(1, 0, 0.05), tx(1, 0.03, 0.08)};
  auto out = resolve_deliveries(v);
  EXPECT_EQ(out[0].status, Delivery::kCollided);
  EXPECT_EQ(out[1].status, Delivery::kCollided);
}

TEST(Collisions, DisjointDeliver) {
  std::vector<Transmission> v{tx(1, 0, 0.05), tx(1, 0.06, 0.11), tx(2, 0.0, 0.05)};
  for (const auto& o : resolve_deliveries(v)) EXPECT_EQ(o.status, Delivery::kDelivered);
}

TEST(Collisions, CaptureFlagsLowSinr) {
  CaptureConfig cap{true, 7.0};
  // 10 dB vs 3 dB interferer: SINR = 10 - 10log10(1 + 10^0.3) ~ 5.2 dB.
  std::vector<Transmission> v{tx(1, 0, 0.05, 10.0), tx(1, 0.01, 0.06, 3.0)};
  auto out = resolve_deliveries(v, cap);
  EXPECT_EQ(out[0].status, Delivery::kSuspectedCollision);
  ASSERT_TRUE(out[0].decoded_snr_db.has_value());
  EXPECT_LT(*out[0].decoded_snr_db, 7.0);
  EXPECT_EQ(out[1].status, Delivery::kCollided);
  // A much stronger frame is captured cleanly.
  std::vector<Transmission> w{tx(1, 0, 0.05, 25.0), tx(1, 0.01, 0.06, 3.0)};
  auto out2 = resolve_deliveries(w, cap);
  EXPECT_EQ(out2[0].status, Delivery::kDelivered);
  EXPECT_LT(*out2[0].decoded_snr_db, 25.0);
}

TEST(Collisions, PermutationSymmetric) {
  RngStream rng(3, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Transmission> v;
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    for (int i = 0; i < n; ++i) {
      const double s = rng.uniform_real(0, 0.3);
      v.push_back(tx(static_cast<int>(rng.uniform_int(1, 2)), s, s + 0.05, rng.uniform_real(0, 30)));
      v.back().src = i;
    }
    for (bool capture : {false, true}) {
      const auto base = resolve_deliveries(v, {capture, 7.0});
      auto perm = v;
      std::reverse(perm.begin(), perm.end());
      std::swap(perm.front(), perm[perm.size() / 2]);
      const auto out = resolve_deliveries(perm, {capture, 7.0});
      for (std::size_t i = 0; i < perm.size(); ++i) {
        EXPECT_EQ(out[i], base[static_cast<std::size_t>(perm[i].src)]);
      }
    }
  }
}

TEST(Collisions, ExactlyIntervalOverlap) {
  RngStream rng(4, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = rng.uniform_real(0, 1), b = rng.uniform_real(0, 1);
    const int ca = static_cast<int>(rng.uniform_int(1, 2)), cb = static_cast<int>(rng.uniform_int(1, 2));
    std::vector<Transmission> v{tx(ca, a, a + 0.1), tx(cb, b, b + 0.1)};
    const bool overlap = ca == cb && a < b + 0.1 && b < a + 0.1;
    const auto out = resolve_deliveries(v);
    EXPECT_EQ(out[0].status == Delivery::kCollided, overlap);
    EXPECT_EQ(out[1].status == Delivery::kCollided, overlap);
  }
}
