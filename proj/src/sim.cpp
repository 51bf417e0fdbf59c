#include "avstress/sim.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>

#include "avstress/rng.hpp"

namespace avstress {

std::string_view to_string(TerminalReason reason) {
  switch (reason) {
    case TerminalReason::DefenderCollision: return "defender_collision";
    case TerminalReason::DefenderOffRoad: return "defender_off_road";
    case TerminalReason::HorizonReached: return "horizon_reached";
    case TerminalReason::RouteCompleted: return "route_completed";
  }
  return "unknown";
}

TerminalReason terminal_reason_from_string(std::string_view s) {
  for (auto r : {TerminalReason::DefenderCollision, TerminalReason::DefenderOffRoad,
                 TerminalReason::HorizonReached, TerminalReason::RouteCompleted}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown terminal reason '" + std::string(s) + "'");
}

SimConfig default_sim_config(ScenarioKind kind) {
  SimConfig cfg;
  if (kind == ScenarioKind::Roundabout) {
    cfg.kinematics.horizon = 110;
    cfg.kinematics.defender_speed = 10.0;
    cfg.npc.v0_min = 8.0;
    cfg.npc.v0_max = 12.0;
    cfg.npc.idm.v0 = 10.0;
  }
  return cfg;
}

void validate(const SimConfig& cfg) {
  const auto& k = cfg.kinematics;
  if (k.substeps < 1) throw ConfigError("kinematics.substeps must be >= 1");
  if (!(k.dt > 0 && k.speed_gain > 0 && k.accel_limit > 0 && k.v_max > 0 && k.speed_step > 0 &&
        k.lookahead_time > 0 && k.min_lookahead > 0 && k.vehicle_length > 0 &&
        k.vehicle_width > 0 && k.min_spawn_gap >= 0)) {
    throw ConfigError("kinematics parameters must be positive");
  }
  if (!(k.defender_speed >= 0 && k.defender_speed <= k.v_max)) {
    throw ConfigError("kinematics.defender_speed must lie in [0, v_max]");
  }
  if (k.horizon < 1) throw ConfigError("kinematics.horizon must be >= 1");
  validate(cfg.npc.idm);
  validate(cfg.npc.mobil);
  if (!(cfg.npc.v0_min > 0 && cfg.npc.v0_min <= cfg.npc.v0_max && cfg.npc.v0_max <= k.v_max)) {
    throw ConfigError("npc.v0_min/v0_max must satisfy 0 < v0_min <= v0_max <= v_max");
  }
}

const Vehicle& EnvState::vehicle(VehicleId id) const {
  const auto i = static_cast<std::size_t>(to_int(id));
  if (to_int(id) < 0 || i >= vehicles.size()) {
    throw RangeError("unknown vehicle id " + std::to_string(to_int(id)));
  }
  return vehicles[i];
}

Vehicle& EnvState::vehicle(VehicleId id) {
  return const_cast<Vehicle&>(static_cast<const EnvState&>(*this).vehicle(id));
}

const Vehicle& EnvState::defender() const {
  for (const Vehicle& v : vehicles) {
    if (v.role == Role::Defender) return v;
  }
  throw UsageError("state has no defender");
}

std::vector<VehicleId> EnvState::ids_with_role(Role role) const {
  std::vector<VehicleId> ids;
  for (const Vehicle& v : vehicles) {
    if (v.role == role) ids.push_back(v.id);
  }
  return ids;
}

std::array<double, Observation::kRows * Observation::kFeatures> Observation::flat() const {
  std::array<double, kRows * kFeatures> out{};
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kFeatures; ++c) out[r * kFeatures + c] = rows[r][c];
  }
  return out;
}

Vehicle apply_action(const RoadNetwork& road, const Vehicle& v, Action a,
                     const KinematicsConfig& limits) {
  if (!v.active()) return v;
  Vehicle out = v;
  switch (a) {
    case Action::Idle: break;
    case Action::Faster:
      out.target_speed = std::clamp(v.target_speed + limits.speed_step, 0.0, limits.v_max);
      break;
    case Action::Slower:
      out.target_speed = std::clamp(v.target_speed - limits.speed_step, 0.0, limits.v_max);
      break;
    case Action::LaneLeft:
    case Action::LaneRight: {
      const Lane& from = road.lane(v.target_lane);
      const auto candidate = a == Action::LaneLeft ? from.left_neighbor : from.right_neighbor;
      // At most one lane away from the lane the vehicle is in.
      if (candidate && road.neighbor_offset(v.lane, *candidate)) out.target_lane = *candidate;
      break;
    }
  }
  return out;
}

namespace {

// Longitudinal coordinate of `other` measured in the frame of `lane`, if
// `other` is on it, changing into it, or one lane-graph hop away.
std::optional<double> longitudinal_on(const RoadNetwork& road, const Vehicle& other, LaneId lane_id) {
  if (other.lane == lane_id) return other.s;
  const Lane& lane = road.lane(lane_id);
  if (other.target_lane == lane_id) return lane.project(other.position).s;
  for (LaneId succ : lane.successors) {
    if (other.lane == succ) {
      return lane.length() + other.s - road.successor_entry(lane_id, succ);
    }
  }
  for (LaneId pred : road.predecessors(lane_id)) {
    if (other.lane == pred) {
      return road.successor_entry(pred, lane_id) - (road.lane(pred).length() - other.s);
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<LaneNeighbor> find_leader(const EnvState& state, LaneId lane, double s,
                                        double length, std::optional<VehicleId> exclude) {
  std::optional<LaneNeighbor> best;
  double best_s = std::numeric_limits<double>::infinity();
  for (const Vehicle& o : state.vehicles) {
    if (!o.present() || (exclude && o.id == *exclude)) continue;
    const auto so = longitudinal_on(*state.road, o, lane);
    if (!so || *so < s) continue;
    if (*so < best_s) {
      best_s = *so;
      best = LaneNeighbor{o.id, (*so - s) - 0.5 * (length + o.length), o.speed};
    }
  }
  return best;
}

std::optional<LaneNeighbor> find_follower(const EnvState& state, LaneId lane, double s,
                                          double length, std::optional<VehicleId> exclude) {
  std::optional<LaneNeighbor> best;
  double best_s = -std::numeric_limits<double>::infinity();
  for (const Vehicle& o : state.vehicles) {
    if (!o.present() || (exclude && o.id == *exclude)) continue;
    const auto so = longitudinal_on(*state.road, o, lane);
    if (!so || *so >= s) continue;
    if (*so > best_s) {
      best_s = *so;
      best = LaneNeighbor{o.id, (s - *so) - 0.5 * (length + o.length), o.speed};
    }
  }
  return best;
}

StepEvents detect_collisions(const EnvState& state) {
  StepEvents events;
  const auto& vs = state.vehicles;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (!vs[i].present()) continue;
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (!vs[j].present()) continue;
      if (overlaps(vs[i].footprint(), vs[j].footprint())) {
        events.collisions.emplace_back(vs[i].id, vs[j].id);
        if (vs[i].role == Role::Defender || vs[j].role == Role::Defender) {
          events.defender_collision = true;
        }
      }
    }
  }
  return events;
}

Observation observe(const EnvState& state, VehicleId agent) {
  const Vehicle& self = state.vehicle(agent);
  Observation obs;
  const Vec2 vel = self.velocity();
  obs.rows[0] = {1.0, self.position.x, self.position.y, vel.x, vel.y};

  struct Entry {
    double dist;
    int id;
    const Vehicle* v;
  };
  std::vector<Entry> others;
  others.reserve(state.vehicles.size());
  for (const Vehicle& o : state.vehicles) {
    if (o.id == agent || !o.present()) continue;
    others.push_back({(o.position - self.position).norm(), to_int(o.id), &o});
  }
  std::sort(others.begin(), others.end(), [](const Entry& a, const Entry& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
  });
  for (std::size_t k = 0; k < others.size() && k + 1 < Observation::kRows; ++k) {
    const Vehicle& o = *others[k].v;
    const Vec2 rel = o.position - self.position;
    const Vec2 rel_v = o.velocity() - vel;
    obs.rows[k + 1] = {1.0, rel.x, rel.y, rel_v.x, rel_v.y};
  }
  return obs;
}

Simulator::Simulator(std::shared_ptr<const RoadNetwork> road, SimConfig config)
    : road_(std::move(road)), config_(config) {
  if (!road_) throw UsageError("simulator requires a road network");
  validate(config_);
}

void Simulator::refresh_pose(Vehicle& v) const {
  const Lane& lane = road_->lane(v.lane);
  const Pose pose = lane.to_world_unchecked(v.s, v.d);
  v.position = pose.position;
  const auto offset = road_->neighbor_offset(v.lane, v.target_lane);
  const double d_target = offset.value_or(0.0);
  const auto& k = config_.kinematics;
  const double lookahead = std::max(v.speed * k.lookahead_time, k.min_lookahead);
  v.heading = wrap_angle(pose.heading + std::atan2(d_target - v.d, lookahead));
}

namespace {

struct Placement {
  LaneId lane;
  double s;
};

bool conflicts(const RoadNetwork& road, const std::vector<Vehicle>& placed, const Vehicle& cand,
               double min_gap) {
  for (const Vehicle& o : placed) {
    const double center_gap = (o.position - cand.position).norm();
    if (o.lane == cand.lane && center_gap < 0.5 * (o.length + cand.length) + min_gap) return true;
    OrientedRect a = o.footprint();
    OrientedRect b = cand.footprint();
    a.length += min_gap;
    b.length += min_gap;
    a.width += 0.5;
    b.width += 0.5;
    if (overlaps(a, b)) return true;
    // Vehicles that will share a lane a hop later.
    const auto so = longitudinal_on(road, o, cand.lane);
    if (so && std::abs(*so - cand.s) < 0.5 * (o.length + cand.length) + min_gap) return true;
  }
  return false;
}

}  // namespace

EnvState Simulator::reset(RoleCounts counts, std::uint64_t seed) const {
  if (counts.attackers < 0 || counts.attackers > 3) {
    throw InitializationError("attacker count must lie in [0, 3]");
  }
  if (counts.npcs < 0) throw InitializationError("NPC count must be non-negative");

  const auto& kin = config_.kinematics;
  const auto& npc = config_.npc;
  Rng rng(derive_seed(seed, "reset"));
  EnvState state;
  state.road = road_;
  state.horizon = kin.horizon;

  auto make_vehicle = [&](Role role, const SpawnRegion& region) {
    Vehicle v;
    v.id = VehicleId{static_cast<std::int32_t>(state.vehicles.size())};
    v.role = role;
    v.lane = region.lane;
    v.target_lane = region.lane;
    v.s = rng.uniform(region.s_min, region.s_max);
    v.d = 0.0;
    v.length = kin.vehicle_length;
    v.width = kin.vehicle_width;
    if (role == Role::Defender) {
      v.speed = kin.defender_speed;
      v.desired_speed = kin.defender_speed;
    } else {
      v.desired_speed = rng.uniform(npc.v0_min, npc.v0_max);
      v.speed = v.desired_speed;
    }
    v.target_speed = v.speed;
    refresh_pose(v);
    return v;
  };

  auto place = [&](Role role, const std::vector<SpawnRegion>& regions) {
    if (regions.empty()) throw InitializationError("no spawn region available");
    constexpr int kAttempts = 2000;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      const SpawnRegion& region = regions[rng.below(regions.size())];
      Vehicle v = make_vehicle(role, region);
      if (!conflicts(*road_, state.vehicles, v, kin.min_spawn_gap)) {
        state.vehicles.push_back(v);
        return state.vehicles.back().id;
      }
    }
    throw InitializationError("could not place " + std::string(to_string(role)) +
                              " without overlap; counts exceed spawn capacity");
  };

  const auto& defender_regions = road_->spawn_regions(Role::Defender);
  switch (road_->kind()) {
    case ScenarioKind::Highway: {
      place(Role::Defender, defender_regions);
      for (int i = 0; i < counts.attackers + counts.npcs; ++i) {
        place(Role::Npc, road_->spawn_regions(Role::Npc));
      }
      // The NPCs closest to the defender become the attackers.
      std::vector<std::pair<double, std::size_t>> by_distance;
      const Vec2 origin = state.vehicles[0].position;
      for (std::size_t i = 1; i < state.vehicles.size(); ++i) {
        by_distance.emplace_back((state.vehicles[i].position - origin).norm(), i);
      }
      std::sort(by_distance.begin(), by_distance.end());
      for (int k = 0; k < counts.attackers; ++k) {
        state.vehicles[by_distance[k].second].role = Role::Attacker;
      }
      break;
    }
    case ScenarioKind::Merge: {
      place(Role::Defender, defender_regions);
      const auto& att = road_->spawn_regions(Role::Attacker);
      for (int k = 0; k < counts.attackers; ++k) {
        if (k == 0) {
          place(Role::Attacker, {att.front()});
        } else {
          place(Role::Attacker, std::vector<SpawnRegion>(att.begin() + 1, att.end()));
        }
      }
      for (int i = 0; i < counts.npcs; ++i) place(Role::Npc, road_->spawn_regions(Role::Npc));
      break;
    }
    case ScenarioKind::Roundabout: {
      const VehicleId id = place(Role::Defender, defender_regions);
      Vehicle& d = state.vehicle(id);
      const std::string entry = road_->lane(d.lane).name();
      const int k = entry.back() - '0';
      d.exit_lane = road_->find_lane("exit_" + std::to_string((k + 2) % 4));
      for (int i = 0; i < counts.attackers; ++i) {
        place(Role::Attacker, road_->spawn_regions(Role::Attacker));
      }
      for (int i = 0; i < counts.npcs; ++i) place(Role::Npc, road_->spawn_regions(Role::Npc));
      break;
    }
  }
  return state;
}

void Simulator::npc_lane_decisions(EnvState& state) const {
  const auto& npc = config_.npc;
  std::vector<std::optional<LaneId>> decisions(state.vehicles.size());
  for (const Vehicle& v : state.vehicles) {
    if (v.role != Role::Npc || !v.active() || v.target_lane != v.lane) continue;
    const Lane& lane = road_->lane(v.lane);
    if (!lane.left_neighbor && !lane.right_neighbor) continue;

    auto surroundings = [&](LaneId lane_id, double s) {
      LaneSurroundings out;
      const auto leader = find_leader(state, lane_id, s, v.length, v.id);
      const auto follower = find_follower(state, lane_id, s, v.length, v.id);
      if (leader) out.leader = Neighbor{leader->gap, leader->speed};
      if (follower) {
        out.follower = Neighbor{follower->gap, follower->speed};
        if (leader) {
          out.follower_without_me =
              Neighbor{follower->gap + v.length + leader->gap, leader->speed};
        }
      }
      return out;
    };

    MobilInput input;
    input.speed = v.speed;
    input.desired_speed = v.desired_speed;
    input.current = surroundings(v.lane, v.s);
    if (lane.left_neighbor) {
      input.left = surroundings(*lane.left_neighbor,
                                road_->lane(*lane.left_neighbor).project(v.position).s);
    }
    if (lane.right_neighbor) {
      input.right = surroundings(*lane.right_neighbor,
                                 road_->lane(*lane.right_neighbor).project(v.position).s);
    }
    IdmParams idm = npc.idm;
    const LaneDecision decision = mobil_decide(input, idm, npc.mobil);
    if (decision == LaneDecision::LaneLeft) decisions[to_int(v.id)] = lane.left_neighbor;
    if (decision == LaneDecision::LaneRight) decisions[to_int(v.id)] = lane.right_neighbor;
  }
  for (Vehicle& v : state.vehicles) {
    if (const auto& target = decisions[to_int(v.id)]) v.target_lane = *target;
  }
}

void Simulator::advance_along_lane(Vehicle& v) const {
  if (v.target_lane != v.lane) {
    const auto offset = road_->neighbor_offset(v.lane, v.target_lane);
    if (!offset) {
      v.target_lane = v.lane;
    } else if ((*offset > 0 && v.d > 0.5 * *offset) || (*offset < 0 && v.d < 0.5 * *offset)) {
      const Vec2 p = road_->lane(v.lane).to_world_unchecked(v.s, v.d).position;
      const LocalCoord local = road_->lane(v.target_lane).project(p);
      v.lane = v.target_lane;
      v.s = local.s;
      v.d = local.d;
    }
  }
  while (v.s > road_->lane(v.lane).length()) {
    const Lane& lane = road_->lane(v.lane);
    if (lane.successors.empty()) {
      v.exited = true;
      v.speed = 0.0;
      v.accel = 0.0;
      return;
    }
    LaneId next = lane.successors.front();
    if (v.exit_lane && std::find(lane.successors.begin(), lane.successors.end(), *v.exit_lane) !=
                           lane.successors.end()) {
      next = *v.exit_lane;
    }
    const Vec2 p = lane.to_world_unchecked(v.s, v.d).position;
    const LocalCoord local = road_->lane(next).project(p);
    v.lane = next;
    v.target_lane = next;
    v.s = local.s;
    v.d = local.d;
  }
}

void Simulator::integrate_substep(EnvState& state) const {
  const auto& k = config_.kinematics;
  const double dt = k.dt;
  std::vector<double> accel(state.vehicles.size(), 0.0);
  for (const Vehicle& v : state.vehicles) {
    if (!v.active()) continue;
    double a = 0.0;
    if (v.role == Role::Npc) {
      IdmParams idm = config_.npc.idm;
      idm.v0 = v.desired_speed;
      auto accel_following = [&](LaneId lane_id) {
        const double s = lane_id == v.lane ? v.s : road_->lane(lane_id).project(v.position).s;
        const auto leader = find_leader(state, lane_id, s, v.length, v.id);
        return idm_accel(v.speed,
                         leader ? std::optional<Neighbor>(Neighbor{leader->gap, leader->speed})
                                : std::nullopt,
                         idm);
      };
      a = accel_following(v.lane);
      if (v.target_lane != v.lane) a = std::min(a, accel_following(v.target_lane));
    } else {
      a = std::clamp(k.speed_gain * (v.target_speed - v.speed), -k.accel_limit, k.accel_limit);
    }
    accel[to_int(v.id)] = a;
  }

  for (Vehicle& v : state.vehicles) {
    if (!v.active()) continue;
    const double v_old = v.speed;
    const double v_new = std::clamp(v_old + accel[to_int(v.id)] * dt, 0.0, k.v_max);
    v.accel = (v_new - v_old) / dt;
    v.speed = v_new;
    const double travel = 0.5 * (v_old + v_new) * dt;

    const Lane& lane = road_->lane(v.lane);
    const double d_target = road_->neighbor_offset(v.lane, v.target_lane).value_or(0.0);
    const double lookahead = std::max(v_new * k.lookahead_time, k.min_lookahead);
    const double psi = std::atan2(d_target - v.d, lookahead);
    const double stretch = 1.0 - lane.curvature() * v.d;
    v.s += travel * std::cos(psi) / stretch;
    v.d += travel * std::sin(psi);
    advance_along_lane(v);
    if (!v.exited) refresh_pose(v);
  }
}

void Simulator::roll_highway_window(EnvState& state) const {
  const auto& geo = road_->config();
  const Vehicle& def = state.defender();
  const double def_s = def.s;
  const double len = geo.highway_length;
  const double despawn = geo.despawn_distance;
  const double spacing = config_.kinematics.vehicle_length + 25.0;

  // Recycle NPCs that fell too far behind (or ran too far ahead) of the
  // defender to the other side of it, in their own lane. Deterministic.
  for (Vehicle& v : state.vehicles) {
    if (v.role != Role::Npc || v.exited) continue;
    const bool behind = v.s < def_s - despawn;
    const bool ahead = v.s > def_s + despawn;
    if (!behind && !ahead) continue;
    v.lane = v.target_lane;
    double s_new = behind ? def_s + 0.6 * despawn : def_s - 0.6 * despawn;
    for (const Vehicle& o : state.vehicles) {
      if (o.id == v.id || o.exited || o.lane != v.lane) continue;
      if (behind && o.s > def_s) s_new = std::max(s_new, o.s + spacing);
      if (ahead && o.s < def_s) s_new = std::min(s_new, o.s - spacing);
    }
    v.s = std::clamp(s_new, 0.0, len);
    v.d = 0.0;
    v.crashed = false;
    v.speed = v.desired_speed;
    v.target_speed = v.desired_speed;
    v.accel = 0.0;
    refresh_pose(v);
  }

  if (def_s > 0.5 * len) {
    const double shift = 0.25 * len;
    state.window_shift += shift;
    for (Vehicle& v : state.vehicles) {
      if (v.exited) continue;
      v.s -= shift;
      if (v.s < 0.0) {
        v.exited = true;
        v.speed = 0.0;
        continue;
      }
      refresh_pose(v);
    }
  }
}

StepResult Simulator::step(const EnvState& state, const JointActions& actions) const {
  if (state.terminal) throw UsageError("cannot step a terminal state");
  if (state.road != road_) throw UsageError("state belongs to a different road network");
  StepResult result{state, {}};
  EnvState& next = result.state;
  StepEvents& events = result.events;

  for (Vehicle& v : next.vehicles) {
    if (v.role == Role::Npc) continue;
    const auto it = actions.find(v.id);
    if (it == actions.end()) {
      throw UsageError("joint action missing for vehicle " + std::to_string(to_int(v.id)));
    }
    v = apply_action(*road_, v, it->second, config_.kinematics);
  }
  npc_lane_decisions(next);

  std::set<std::pair<int, int>> seen;
  bool defender_off_road = false;
  for (int sub = 0; sub < config_.kinematics.substeps; ++sub) {
    integrate_substep(next);

    auto& vs = next.vehicles;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (!vs[i].present()) continue;
      for (std::size_t j = i + 1; j < vs.size(); ++j) {
        if (!vs[j].present() || (vs[i].crashed && vs[j].crashed)) continue;
        if (!overlaps(vs[i].footprint(), vs[j].footprint())) continue;
        if (seen.insert({to_int(vs[i].id), to_int(vs[j].id)}).second) {
          events.collisions.emplace_back(vs[i].id, vs[j].id);
        }
        for (Vehicle* v : {&vs[i], &vs[j]}) {
          v->crashed = true;
          v->speed = 0.0;
          v->accel = 0.0;
          if (v->role == Role::Defender) events.defender_collision = true;
        }
      }
    }
    for (Vehicle& v : vs) {
      if (!v.active()) continue;
      const Lane& lane = road_->lane(v.lane);
      const double edge = 0.5 * lane.width();
      if ((v.d > edge && !lane.left_neighbor) || (v.d < -edge && !lane.right_neighbor)) {
        events.off_road.push_back(v.id);
        v.crashed = true;
        v.speed = 0.0;
        v.accel = 0.0;
        if (v.role == Role::Defender) defender_off_road = true;
      }
    }
    if (events.defender_collision || defender_off_road || next.defender().exited) break;
  }

  if (road_->kind() == ScenarioKind::Highway && !next.defender().crashed) {
    roll_highway_window(next);
  }

  next.step_index += 1;
  if (events.defender_collision) {
    next.terminal_reason = TerminalReason::DefenderCollision;
  } else if (defender_off_road) {
    next.terminal_reason = TerminalReason::DefenderOffRoad;
  } else if (next.defender().exited) {
    next.terminal_reason = TerminalReason::RouteCompleted;
  } else if (next.step_index >= next.horizon) {
    next.terminal_reason = TerminalReason::HorizonReached;
  }
  next.terminal = next.terminal_reason.has_value();
  return result;
}

}  // namespace avstress
