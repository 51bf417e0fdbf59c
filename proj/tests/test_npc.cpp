#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "avstress/common.hpp"
#include "avstress/npc.hpp"

using namespace avstress;

namespace {

// Straight evaluation of the closed form, kept separate from the library.
double idm_reference(double v, double gap, double v_lead, double v0, double T, double s0,
                     double a, double b, double delta) {
  const double s_star = s0 + v * T + v * (v - v_lead) / (2.0 * std::sqrt(a * b));
  return a * (1.0 - std::pow(v / v0, delta) - (s_star / gap) * (s_star / gap));
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST(Idm, FreeRoadEquilibrium) {
  IdmParams p;
  EXPECT_NEAR(idm_accel(p.v0, kInf, 0.0, p), 0.0, 1e-12);
}

TEST(Idm, StandstillFreeRoad) {
  IdmParams p;
  EXPECT_DOUBLE_EQ(idm_accel(0.0, std::nullopt, p), p.a_max);
}

TEST(Idm, ClosedFormFollowing) {
  IdmParams p;
  p.v0 = 30;
  const double expected = idm_reference(20, 30, 20, 30, 1.5, 2, 3, 3, 4);
  // s* = 2 + 20*1.5 = 32 m.
  EXPECT_NEAR(expected, 3.0 * (1.0 - std::pow(2.0 / 3.0, 4) - std::pow(32.0 / 30.0, 2)), 1e-12);
  EXPECT_NEAR(idm_accel(20, 30, 20, p), expected, 1e-12);
  EXPECT_NEAR(idm_accel(20, 30, 20, p), -1.00593, 1e-5);
}

TEST(Idm, ApproachingFasterThanLeader) {
  IdmParams p;
  const double expected = idm_reference(25, 60, 15, p.v0, 1.5, 2, 3, 3, 4);
  EXPECT_NEAR(idm_accel(25, 60, 15, p), std::max(expected, -p.b_hard), 1e-12);
}

TEST(Idm, NonPositiveGapIsEmergencyBrake) {
  IdmParams p;
  EXPECT_DOUBLE_EQ(idm_accel(10, 0.0, 10, p), -p.b_hard);
  EXPECT_DOUBLE_EQ(idm_accel(10, -1.0, 10, p), -p.b_hard);
}

TEST(Idm, MonotoneAndBounded) {
  IdmParams p;
  for (double v_lead = 0; v_lead <= 40; v_lead += 5) {
    for (double gap = 0.5; gap <= 200; gap += 3.7) {
      double prev = kInf;
      for (double v = 0; v <= 40; v += 0.5) {
        const double a = idm_accel(v, gap, v_lead, p);
        ASSERT_GE(a, -p.b_hard);
        ASSERT_LE(a, p.a_max);
        ASSERT_LE(a, prev + 1e-12) << "v=" << v << " gap=" << gap;
        prev = a;
      }
    }
    for (double v = 0; v <= 40; v += 2.5) {
      double prev = -kInf;
      for (double gap = 0.5; gap <= 200; gap += 0.9) {
        const double a = idm_accel(v, gap, v_lead, p);
        ASSERT_GE(a, prev - 1e-12);
        prev = a;
      }
    }
  }
}

TEST(Idm, ParameterValidation) {
  IdmParams p;
  p.delta = 0.5;
  EXPECT_THROW(validate(p), ConfigError);
  p = {};
  p.time_headway = 0;
  EXPECT_THROW(validate(p), ConfigError);
  MobilParams m;
  m.politeness = 1.5;
  EXPECT_THROW(validate(m), ConfigError);
}

TEST(Mobil, NoNeighborLaneStays) {
  MobilInput in;
  in.speed = 20;
  in.desired_speed = 30;
  in.current.leader = Neighbor{5, 5};
  EXPECT_EQ(mobil_decide(in, {}, {}), LaneDecision::Stay);
}

TEST(Mobil, SlowLeaderEmptyLeftLane) {
  IdmParams idm;
  MobilParams mobil;
  mobil.politeness = 0.0;
  MobilInput in;
  in.speed = 25;
  in.desired_speed = 25;
  in.current.leader = Neighbor{20, 10};
  in.left = LaneSurroundings{};

  IdmParams own = idm;
  own.v0 = 25;
  const double gain = idm_accel(25, kInf, 0, own) - idm_accel(25, 20, 10, own);
  ASSERT_GT(gain, mobil.a_thr);
  EXPECT_EQ(mobil_decide(in, idm, mobil), LaneDecision::LaneLeft);
}

TEST(Mobil, SafetyVetoOverridesIncentive) {
  IdmParams idm;
  MobilParams mobil;
  mobil.politeness = 0.0;
  MobilInput in;
  in.speed = 20;
  in.desired_speed = 30;
  in.current.leader = Neighbor{8, 5};
  LaneSurroundings left;
  // Fast follower right behind the gap.
  left.follower = Neighbor{3, 35};
  in.left = left;
  ASSERT_LT(idm_accel(35, 3, 20, idm), -mobil.b_safe);
  EXPECT_EQ(mobil_decide(in, idm, mobil), LaneDecision::Stay);
}

TEST(Mobil, LeftPreferredOnTies) {
  MobilParams mobil;
  mobil.politeness = 0.0;
  MobilInput in;
  in.speed = 25;
  in.desired_speed = 25;
  in.current.leader = Neighbor{15, 10};
  in.left = LaneSurroundings{};
  in.right = LaneSurroundings{};
  EXPECT_EQ(mobil_decide(in, {}, mobil), LaneDecision::LaneLeft);
}

TEST(Mobil, OnlyExistingLanesChosen) {
  MobilParams mobil;
  MobilInput in;
  in.speed = 25;
  in.desired_speed = 25;
  in.current.leader = Neighbor{15, 10};
  in.right = LaneSurroundings{};
  EXPECT_EQ(mobil_decide(in, {}, mobil), LaneDecision::LaneRight);
}
