#pragma once

#include <optional>

namespace avstress {

struct IdmParams {
  double v0 = 25.0;       // desired speed, m/s
  double time_headway = 1.5;
  double jam_distance = 2.0;
  double a_max = 3.0;
  double b_comf = 3.0;    // positive
  double delta = 4.0;
  double b_hard = 8.0;    // emergency deceleration bound, positive

  friend bool operator==(const IdmParams&, const IdmParams&) = default;
};

struct MobilParams {
  double politeness = 0.3;
  double b_safe = 4.0;
  double a_thr = 0.2;

  friend bool operator==(const MobilParams&, const MobilParams&) = default;
};

void validate(const IdmParams& p);
void validate(const MobilParams& p);

// Bumper-to-bumper gap to a vehicle and its speed.
struct Neighbor {
  double gap = 0.0;
  double speed = 0.0;
};

// Intelligent Driver Model acceleration. No leader means free road.
// Result is clamped to [-b_hard, a_max]; a non-positive gap to a present
// leader yields -b_hard.
double idm_accel(double v, std::optional<Neighbor> leader, const IdmParams& params);

// Convenience overload: gap = +infinity means no leader.
double idm_accel(double v, double gap, double v_lead, const IdmParams& params);

enum class LaneDecision { Stay, LaneLeft, LaneRight };

// The surroundings of the deciding vehicle in one lane. `follower_leader` is
// the vehicle the follower currently follows (the deciding vehicle itself in
// the current lane, the leader in a target lane).
struct LaneSurroundings {
  std::optional<Neighbor> leader;
  std::optional<Neighbor> follower;
  // The follower's own gap to the leader if the deciding vehicle were absent.
  std::optional<Neighbor> follower_without_me;
};

struct MobilInput {
  double speed = 0.0;
  double desired_speed = 0.0;
  LaneSurroundings current;
  std::optional<LaneSurroundings> left;
  std::optional<LaneSurroundings> right;
};

LaneDecision mobil_decide(const MobilInput& input, const IdmParams& idm, const MobilParams& mobil);

}  // namespace avstress
