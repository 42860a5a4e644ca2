#include <gtest/gtest.h>

#include <string>

#include "wacps/scenario.hpp"

using namespace wacps;

namespace {

std::string error_path(const std::string& json) {
  try {
    parse_scenario(json);
  } catch (const ScenarioError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Scenario, MinimalConfigTakesDefaults) {
  const auto s = parse_scenario(R"({"protocol": "ctrlmac", "duration": 9000, "seed": 1})");
  EXPECT_EQ(s.protocol, Protocol::kCtrlMac);
  EXPECT_DOUBLE_EQ(s.duration, 9000.0);
  ASSERT_EQ(s.subsystems.size(), 3u);
  EXPECT_EQ(s.node_count(), 10);
  EXPECT_EQ(s.models.size(), 3u);
  EXPECT_DOUBLE_EQ(s.subsystems[0].h, 4.5);
  EXPECT_DOUBLE_EQ(s.subsystems[0].sigma, 0.1);
  EXPECT_EQ(s.mac.k, 5);
  EXPECT_DOUBLE_EQ(s.mac.t_slot, 0.1);
  EXPECT_EQ(s.sensors.phase, PhaseMode::kZero);
  EXPECT_FALSE(s.traffic.enabled);
  EXPECT_EQ(s.plan.channels.size(), 6u);
}

TEST(Scenario, ProtocolNamesRoundTrip) {
  for (auto p : {Protocol::kCtrlMac, Protocol::kLoRaWan, Protocol::kLoRaWanPP, Protocol::kWired}) {
    EXPECT_EQ(protocol_from_string(to_string(p)), p);
  }
  EXPECT_FALSE(protocol_from_string("zigbee"));
}

TEST(Scenario, SigmaOutOfRangeNamesField) {
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1,
                           "subsystems": [{"tanks": 3, "sigma": 1.2}]})"),
            "subsystems[0].sigma");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1, "control": {"sigma": 1.0}})"),
            "subsystems[0].sigma");
}

TEST(Scenario, DelayBoundMustBeBelowPeriod) {
  EXPECT_EQ(error_path(R"({"protocol": "wired", "duration": 10, "seed": 1,
                           "subsystems": [{"tanks": 3}, {"tanks": 4, "h": 2, "tau_d": 2}]})"),
            "subsystems[1].tau_d");
}

TEST(Scenario, UnknownKeysAreErrors) {
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1, "colour": "red"})"), "colour");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1, "mac": {"kk": 3}})"), "mac.kk");
}

TEST(Scenario, RequiredAndTypedFields) {
  EXPECT_EQ(error_path(R"({"duration": 10, "seed": 1})"), "protocol");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "seed": 1})"), "duration");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10})"), "seed");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": -3})"), "seed");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": "long", "seed": 1})"), "duration");
  EXPECT_EQ(error_path(R"({"protocol": "bluetooth", "duration": 10, "seed": 1})"), "protocol");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": -1, "seed": 1})"), "duration");
  EXPECT_EQ(error_path("{not json"), "$");
}

TEST(Scenario, TankArrayAndPhases) {
  const auto s = parse_scenario(R"({
    "protocol": "lorawanpp", "duration": 100, "seed": 7,
    "subsystems": [{"tanks": [{"beta": 0.003}, {}, {}], "h": 1.0}],
    "sensors": {"resolution": 0.001, "phase": [0.0, 0.5, 0.25]},
    "noise": {"stddev": 0.05, "corr_time": 600}
  })");
  ASSERT_EQ(s.subsystems.size(), 1u);
  ASSERT_EQ(s.subsystems[0].tanks.size(), 3u);
  EXPECT_DOUBLE_EQ(s.subsystems[0].tanks[0].beta, 0.003);
  EXPECT_EQ(s.sensors.phase, PhaseMode::kExplicit);
  EXPECT_DOUBLE_EQ(s.sensors.offsets[1], 0.5);
  EXPECT_DOUBLE_EQ(s.noise.corr_time, 600.0);
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1, "subsystems": [{"tanks": 2}]})"),
            "subsystems[0]");

  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1,
                           "subsystems": [{"tanks": 3, "h": 1.0}], "sensors": {"phase": [0.0, 1.0, 0.2]}})"),
            "sensors.phase[1]");
}

TEST(Scenario, FaultDemand) {
  const auto s = parse_scenario(R"({"protocol": "ctrlmac", "duration": 9000, "seed": 1,
    "demand": {"kind": "fault", "base": "constant", "level": 70, "design": 70, "leak": 30,
               "fault_start": 3000, "fault_end": 6000, "fault_tanks": [0]}})");
  EXPECT_EQ(s.demand.kind, plant::DemandKind::kFault);
  EXPECT_DOUBLE_EQ(s.design_demand, 70.0);
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1,
                           "demand": {"kind": "fault", "fault_start": 5, "fault_end": 5}})"),
            "demand.fault_end");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1,
                           "demand": {"fault_tanks": [10]}})"),
            "demand.fault_tanks[0]");
}

TEST(Scenario, ChannelPlanChecks) {
  // Ctrl-MAC needs exactly one request channel.
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1, "channels": {"list": [
      {"id": 1, "bandwidth_hz": 125000, "duty_cycle": 0.01, "direction": "uplink", "role": "data"},
      {"id": 5, "bandwidth_hz": 125000, "duty_cycle": 0.1, "direction": "downlink", "role": "rrm_ack"},
      {"id": 6, "bandwidth_hz": 125000, "duty_cycle": 0.1, "direction": "downlink", "role": "actuation"}]}})"),
            "channels");
  EXPECT_EQ(error_path(R"({"protocol": "ctrlmac", "duration": 10, "seed": 1, "channels": {"list": [
      {"id": 1, "bandwidth_hz": 125000, "duty_cycle": 1.5, "direction": "uplink", "role": "data"}]}})"),
            "channels");
}

TEST(Scenario, TrafficModeSkipsPlant) {
  const auto s = parse_scenario(R"({"protocol": "lorawan", "duration": 600, "seed": 3,
    "traffic": {"nodes": 50, "interval": 50, "pattern": "exponential"}})");
  EXPECT_TRUE(s.traffic.enabled);
  EXPECT_EQ(s.traffic.nodes, 50);
  EXPECT_EQ(s.node_count(), 50);
  EXPECT_TRUE(s.models.empty());
  EXPECT_EQ(error_path(R"({"protocol": "lorawan", "duration": 600, "seed": 3, "traffic": {"nodes": 300}})"),
            "traffic.nodes");
}

TEST(Scenario, FinalizeRejectsBadProgrammaticSpec) {
  ScenarioSpec s;
  s.subsystems = default_subsystems();
  s.subsystems[2].tanks[1].beta = 0.0;
  try {
    finalize_scenario(s);
    FAIL() << "expected ScenarioError";
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.path(), "subsystems[2].tanks[1].beta");
  }
}
