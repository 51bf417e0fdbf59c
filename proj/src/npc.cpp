#include "avstress/npc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "avstress/common.hpp"

namespace avstress {

void validate(const IdmParams& p) {
  if (!(p.v0 > 0 && p.time_headway > 0 && p.jam_distance > 0 && p.a_max > 0 && p.b_comf > 0 &&
        p.b_hard > 0)) {
    throw ConfigError("IDM parameters must all be positive");
  }
  if (!(p.delta >= 1.0)) throw ConfigError("IDM exponent delta must be >= 1");
}

void validate(const MobilParams& p) {
  if (!(p.politeness >= 0.0 && p.politeness <= 1.0)) {
    throw ConfigError("MOBIL politeness must lie in [0, 1]");
  }
  if (!(p.b_safe > 0.0)) throw ConfigError("MOBIL b_safe must be positive");
  if (!(p.a_thr >= 0.0)) throw ConfigError("MOBIL a_thr must be non-negative");
}

double idm_accel(double v, std::optional<Neighbor> leader, const IdmParams& params) {
  double a = params.a_max * (1.0 - std::pow(v / params.v0, params.delta));
  if (leader) {
    if (leader->gap <= 0.0) return -params.b_hard;
    const double dv = v - leader->speed;
    const double dynamic = v * params.time_headway +
                           v * dv / (2.0 * std::sqrt(params.a_max * params.b_comf));
    const double s_star = params.jam_distance + std::max(0.0, dynamic);
    const double ratio = s_star / leader->gap;
    a -= params.a_max * ratio * ratio;
  }
  return std::clamp(a, -params.b_hard, params.a_max);
}

double idm_accel(double v, double gap, double v_lead, const IdmParams& params) {
  if (std::isinf(gap) && gap > 0) return idm_accel(v, std::nullopt, params);
  return idm_accel(v, Neighbor{gap, v_lead}, params);
}

namespace {

struct Candidate {
  bool acceptable = false;
  double incentive = -std::numeric_limits<double>::infinity();
};

Candidate evaluate_change(const MobilInput& in, const LaneSurroundings& target,
                          const IdmParams& idm, const MobilParams& mobil) {
  Candidate c;
  if (target.leader && target.leader->gap <= 0.0) return c;
  if (target.follower && target.follower->gap <= 0.0) return c;

  IdmParams own = idm;
  own.v0 = in.desired_speed > 0.0 ? in.desired_speed : idm.v0;
  const double a_self = idm_accel(in.speed, in.current.leader, own);
  const double a_self_new = idm_accel(in.speed, target.leader, own);

  double new_follower_gain = 0.0;
  if (target.follower) {
    const double v_nf = target.follower->speed;
    const double before = idm_accel(v_nf, target.follower_without_me, idm);
    const double after = idm_accel(v_nf, Neighbor{target.follower->gap, in.speed}, idm);
    if (after < -mobil.b_safe) return c;
    new_follower_gain = after - before;
  }
  double old_follower_gain = 0.0;
  if (in.current.follower) {
    const double v_of = in.current.follower->speed;
    const double before = idm_accel(v_of, Neighbor{in.current.follower->gap, in.speed}, idm);
    const double after = idm_accel(v_of, in.current.follower_without_me, idm);
    old_follower_gain = after - before;
  }
  c.incentive = (a_self_new - a_self) + mobil.politeness * (new_follower_gain + old_follower_gain);
  c.acceptable = c.incentive > mobil.a_thr;
  return c;
}

}  // namespace

LaneDecision mobil_decide(const MobilInput& input, const IdmParams& idm, const MobilParams& mobil) {
  Candidate left, right;
  if (input.left) left = evaluate_change(input, *input.left, idm, mobil);
  if (input.right) right = evaluate_change(input, *input.right, idm, mobil);
  if (left.acceptable && (!right.acceptable || left.incentive >= right.incentive)) {
    return LaneDecision::LaneLeft;
  }
  if (right.acceptable) return LaneDecision::LaneRight;
  return LaneDecision::Stay;
}

}  // namespace avstress
