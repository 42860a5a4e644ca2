#include <gtest/gtest.h>

#include <map>
#include <set>

#include "wacps/ctrlmac.hpp"

using namespace wacps;
using namespace wacps::ctrlmac;

namespace {

Rrm random_rrm(RngStream& rng, const RrmLayout& lay) {
  Rrm r;
  for (int s = 0; s < lay.k; ++s) {
    RrmSlot slot;
    slot.c0 = static_cast<int>(rng.uniform_int(0, 2));
    if (slot.c0 == 1) {
      slot.c1 = static_cast<int>(rng.uniform_int(1, lay.l));
      slot.c2 = static_cast<int>(rng.uniform_int(1, lay.m_d));
    }
    r.slots.push_back(slot);
  }
  r.ftr = static_cast<int>(rng.uniform_int(0, 255));
  return r;
}

}  // namespace

TEST(RrmCodec, SizeForThreeSlots) {
  RrmLayout lay{3, 16, 3};
  EXPECT_EQ(lay.total_bits(), 32);
  Rrm r{{{1, 4, 2}, {2, 0, 0}, {0, 0, 0}}, 7};
  EXPECT_EQ(encode_rrm(r, lay).size(), 4u);
}

TEST(RrmCodec, KnownBitPattern) {
  RrmLayout lay{1, 16, 3};
  // c0=01, c1-1=0011, c2-1=01, ftr=00000101
  Rrm r{{{1, 4, 2}}, 5};
  const auto bytes = encode_rrm(r, lay);
  ASSERT_EQ(bytes.size(), 2u);
  EXPECT_EQ(bytes[0], 0b01001101);
  EXPECT_EQ(bytes[1], 0b00000101);
}

TEST(RrmCodec, RoundTrip) {
  RngStream rng(9, 0);
  for (int i = 0; i < 2000; ++i) {
    RrmLayout lay{static_cast<int>(rng.uniform_int(1, 8)), static_cast<int>(rng.uniform_int(1, 32)),
                  static_cast<int>(rng.uniform_int(1, 5))};
    const Rrm r = random_rrm(rng, lay);
    const auto bytes = encode_rrm(r, lay);
    EXPECT_EQ(static_cast<int>(bytes.size()), lay.total_bytes());
    EXPECT_EQ(decode_rrm(bytes, lay), r);
  }
}

TEST(RrmCodec, RangeErrors) {
  RrmLayout lay{1, 16, 3};
  EXPECT_THROW(encode_rrm({{{3, 0, 0}}, 0}, lay), RrmFormatError);
  EXPECT_THROW(encode_rrm({{{1, 17, 1}}, 0}, lay), RrmFormatError);
  EXPECT_THROW(encode_rrm({{{1, 1, 4}}, 0}, lay), RrmFormatError);
  EXPECT_THROW(encode_rrm({{{0, 0, 0}}, 256}, lay), RrmFormatError);
  EXPECT_THROW(encode_rrm({{{0, 0, 0}, {0, 0, 0}}, 0}, lay), RrmFormatError);
  const std::vector<std::uint8_t> one{0};
  EXPECT_THROW(decode_rrm(one, lay), RrmFormatError);
}

TEST(RequestSlot, Uniform) {
  RngStream rng(1, 2);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(choose_request_slot(rng, 1), 1);
  std::map<int, int> counts;
  constexpr int kN = 100000;
  for (int i = 0; i < kN; ++i) ++counts[choose_request_slot(rng, 5)];
  ASSERT_EQ(counts.size(), 5u);
  for (auto [s, c] : counts) EXPECT_NEAR(static_cast<double>(c) / kN, 0.2, 0.01);
}

TEST(RetransmitWait, Formula) {
  EXPECT_EQ(retransmit_wait_index(1, 1, 1), 1);
  EXPECT_EQ(retransmit_wait_index(3, 2, 1), 4);
  EXPECT_EQ(retransmit_wait_index(2, 3, 3), 2);
  EXPECT_THROW(retransmit_wait_index(1, 1, 2), std::invalid_argument);
  EXPECT_THROW(retransmit_wait_index(0, 1, 1), std::invalid_argument);
}

TEST(GatewayRound, MixedSlots) {
  GatewaySchedule g;
  g.layout = {3, 16, 3};
  std::vector<SlotRequest> req{{10, 1}, {11, 2}, {12, 2}};
  auto res = gateway_round(req, g);
  EXPECT_EQ(res.rrm.slots[0], (RrmSlot{1, 1, 1}));
  EXPECT_EQ(res.rrm.slots[1].c0, 2);
  EXPECT_EQ(res.rrm.slots[2].c0, 0);
  EXPECT_EQ(res.rrm.ftr, 1);
  ASSERT_EQ(res.grants.size(), 1u);
  EXPECT_EQ(res.grants[0].node, 10);
}

TEST(GatewayRound, DecrementWhenIdle) {
  GatewaySchedule g;
  g.ftr = 3;
  auto res = gateway_round({}, g);
  for (const auto& s : res.rrm.slots) EXPECT_EQ(s.c0, 0);
  EXPECT_EQ(res.rrm.ftr, 2);
  g.ftr = 0;
  EXPECT_EQ(gateway_round({}, g).rrm.ftr, 0);
}

TEST(GatewayRound, ExhaustionDefers) {
  GatewaySchedule g;
  g.layout = {3, 1, 2};  // two (slot, channel) pairs
  std::vector<SlotRequest> req{{1, 1}, {2, 2}, {3, 3}};
  auto res = gateway_round(req, g);
  EXPECT_EQ(res.grants.size(), 2u);
  EXPECT_EQ(res.rrm.slots[2].c0, 2);
  EXPECT_EQ(res.deferred, 1);
  EXPECT_EQ(res.rrm.ftr, 1);
}

TEST(GatewayRound, FilterSkipsPairs) {
  GatewaySchedule g;
  auto res = gateway_round(std::vector<SlotRequest>{{7, 1}}, g,
                           [](int, int c1, int c2) { return c1 >= 2 && c2 == 3; });
  EXPECT_EQ(res.rrm.slots[0], (RrmSlot{1, 2, 3}));
}

TEST(GatewayRound, UniqueGrantsAndFtrConservation) {
  RngStream rng(5, 5);
  GatewaySchedule g;
  g.layout = {5, 4, 2};
  int reference = 0;
  for (int round = 0; round < 5000; ++round) {
    std::vector<SlotRequest> req;
    const int n = static_cast<int>(rng.uniform_int(0, 12));
    for (int i = 0; i < n; ++i) req.push_back({i, static_cast<int>(rng.uniform_int(1, 5))});
    // Reference tally from raw requests: unresolved = multi-occupied slots
    // plus lone requesters beyond the l*m_d capacity.
    std::map<int, int> occ;
    for (auto r : req) ++occ[r.slot];
    int unresolved = 0, singles = 0;
    for (auto [s, c] : occ) {
      if (c >= 2) ++unresolved;
      else ++singles;
    }
    unresolved += std::max(singles - g.layout.l * g.layout.m_d, 0);
    reference = std::max(reference - 1, 0) + unresolved;

    auto res = gateway_round(req, g);
    EXPECT_EQ(g.ftr, reference);
    std::set<std::pair<int, int>> pairs;
    for (const auto& gr : res.grants) EXPECT_TRUE(pairs.insert({gr.c1, gr.c2}).second);
  }
}

TEST(NodeMac, GrantPath) {
  RngStream rng(1, 1);
  NodeMacState st;
  node_on_sample(st, {1.0, 0.0, 1});
  auto a = node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
  ASSERT_TRUE(std::holds_alternative<SendRequest>(a));
  st.request_slot = 2;  // pin the slot for the example
  Rrm rrm{std::vector<RrmSlot>(5), 0};
  rrm.slots[1] = {1, 4, 2};
  auto b = node_on_rrm(st, rrm, rng, 5);
  ASSERT_TRUE(std::holds_alternative<SendData>(b));
  EXPECT_EQ(std::get<SendData>(b).c1, 4);
  EXPECT_EQ(std::get<SendData>(b).c2, 2);
  EXPECT_EQ(node_on_data_sent(st).event_id, 1);
  EXPECT_EQ(st.phase, Phase::kIdle);
}

TEST(NodeMac, CollisionWaitsThenRerequests) {
  RngStream rng(1, 1);
  NodeMacState st;
  node_on_sample(st, {1.0, 0.0, 1});
  node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
  Rrm rrm{std::vector<RrmSlot>(5), 1};
  rrm.slots[static_cast<std::size_t>(st.request_slot - 1)].c0 = 2;
  auto a = node_on_rrm(st, rrm, rng, 5);
  ASSERT_TRUE(std::holds_alternative<Wait>(a));
  EXPECT_EQ(std::get<Wait>(a).n_rrm, 1);
  auto b = node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
  EXPECT_TRUE(std::holds_alternative<SendRequest>(b));
}

TEST(NodeMac, BackoffStrictlyDecreases) {
  RngStream rng(2, 1);
  NodeMacState st;
  node_on_sample(st, {1.0, 0.0, 1});
  node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
  Rrm rrm{std::vector<RrmSlot>(5), 4};
  for (auto& s : rrm.slots) s.c0 = 2;
  auto a = node_on_rrm(st, rrm, rng, 5);
  int prev = std::get<Wait>(a).n_rrm;
  EXPECT_EQ(prev, 4 + 5 - st.request_slot);
  while (true) {
    auto b = node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
    if (std::holds_alternative<SendRequest>(b)) break;
    ASSERT_TRUE(std::holds_alternative<Wait>(b));
    EXPECT_LT(std::get<Wait>(b).n_rrm, prev);
    prev = std::get<Wait>(b).n_rrm;
  }
  EXPECT_EQ(prev, 1);
}

TEST(NodeMac, NewerSampleReplacesPending) {
  RngStream rng(1, 1);
  NodeMacState st;
  node_on_sample(st, {1.0, 0.0, 1});
  node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
  Rrm rrm{std::vector<RrmSlot>(5), 1};
  rrm.slots[static_cast<std::size_t>(st.request_slot - 1)].c0 = 2;
  node_on_rrm(st, rrm, rng, 5);
  auto replaced = node_on_sample(st, {2.0, 4.5, 2});
  ASSERT_TRUE(replaced.has_value());
  EXPECT_EQ(replaced->event_id, 1);
  EXPECT_EQ(st.phase, Phase::kBackoff);
  node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5);
  Rrm grant{std::vector<RrmSlot>(5), 0};
  grant.slots[static_cast<std::size_t>(st.request_slot - 1)] = {1, 1, 1};
  ASSERT_TRUE(std::holds_alternative<SendData>(node_on_rrm(st, grant, rng, 5)));
  EXPECT_EQ(node_on_data_sent(st).event_id, 2);
}

TEST(NodeMac, DecodeFailureKeepsSyncing) {
  RngStream rng(1, 1);
  NodeMacState st;
  node_on_sample(st, {1.0, 0.0, 1});
  EXPECT_TRUE(std::holds_alternative<Sleep>(node_on_rrm(st, std::nullopt, rng, 5)));
  EXPECT_EQ(st.phase, Phase::kSyncing);
  EXPECT_TRUE(std::holds_alternative<SendRequest>(node_on_rrm(st, Rrm{std::vector<RrmSlot>(5), 0}, rng, 5)));
}

TEST(Actuation, FrameSizes) {
  std::map<int, std::uint8_t> box;
  for (int i = 0; i < 10; ++i) box[i] = static_cast<std::uint8_t>(i * 3);
  auto f = build_actuation_frames(box);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].size(), 20u);
  auto entries = parse_actuation_frame(f[0]);
  EXPECT_EQ(entries[3].address, 3);
  EXPECT_EQ(entries[3].value, 9);

  box.clear();
  for (int i = 0; i < 111; ++i) box[i] = 1;
  f = build_actuation_frames(box);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].size(), 222u);

  box[111] = 1;
  f = build_actuation_frames(box);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].size(), 222u);
  EXPECT_EQ(f[1].size(), 2u);
  EXPECT_TRUE(build_actuation_frames({}).empty());
}

TEST(Actuation, DownlinkCadence) {
  const auto plan = ChannelPlan::default_plan();
  DownlinkScheduler dl(plan, 6);
  const double toa = dl.book(0.0, 20);
  EXPECT_NEAR(dl.next_allowed(), toa / 0.1, 1e-12);
  EXPECT_GT(dl.earliest_start(0.2), 0.2);
  EXPECT_THROW(dl.book(0.1, 20), std::logic_error);
}
