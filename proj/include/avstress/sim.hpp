#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "avstress/collision.hpp"
#include "avstress/common.hpp"
#include "avstress/npc.hpp"
#include "avstress/road.hpp"

namespace avstress {

struct KinematicsConfig {
  int substeps = 15;
  double dt = 1.0 / 15.0;
  // Proportional speed tracking for defender and attackers.
  double speed_gain = 1.0;
  double accel_limit = 5.0;
  double v_max = 40.0;
  double speed_step = 5.0;
  // Lateral pure pursuit toward the target lane centerline.
  double lookahead_time = 0.6;
  double min_lookahead = 4.0;
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  double defender_speed = 25.0;
  // Bumper-to-bumper clearance enforced when placing vehicles at reset.
  double min_spawn_gap = 10.0;
  int horizon = 80;

  friend bool operator==(const KinematicsConfig&, const KinematicsConfig&) = default;
};

struct NpcConfig {
  IdmParams idm;
  MobilParams mobil;
  // NPC desired speeds are drawn uniformly from this range at reset.
  double v0_min = 22.0;
  double v0_max = 28.0;

  friend bool operator==(const NpcConfig&, const NpcConfig&) = default;
};

struct SimConfig {
  KinematicsConfig kinematics;
  NpcConfig npc;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

// Scenario-dependent defaults: the roundabout runs at lower speeds and has a
// longer horizon.
SimConfig default_sim_config(ScenarioKind kind);
void validate(const SimConfig& cfg);

struct RoleCounts {
  int attackers = 0;
  int npcs = 0;
};

struct Vehicle {
  VehicleId id{};
  Role role = Role::Npc;
  LaneId lane{};
  double s = 0.0;
  double d = 0.0;
  double speed = 0.0;
  double heading = 0.0;
  double target_speed = 0.0;
  LaneId target_lane{};
  double length = 5.0;
  double width = 2.0;
  bool crashed = false;
  // Left the network at a lane end without successor.
  bool exited = false;
  // IDM desired speed (NPCs).
  double desired_speed = 0.0;
  // Preferred branch at forks (roundabout exits).
  std::optional<LaneId> exit_lane;
  Vec2 position;
  double accel = 0.0;

  bool active() const { return !crashed && !exited; }
  bool present() const { return !exited; }
  OrientedRect footprint() const { return {position, heading, length, width}; }
  Vec2 velocity() const { return speed * unit_from_angle(heading); }

  friend bool operator==(const Vehicle&, const Vehicle&) = default;
};

enum class TerminalReason { DefenderCollision, DefenderOffRoad, HorizonReached, RouteCompleted };
std::string_view to_string(TerminalReason reason);
TerminalReason terminal_reason_from_string(std::string_view s);

struct EnvState {
  std::shared_ptr<const RoadNetwork> road;
  std::vector<Vehicle> vehicles;
  int step_index = 0;
  int horizon = 0;
  bool terminal = false;
  std::optional<TerminalReason> terminal_reason;
  // Highway only: total longitudinal shift applied by the rolling window.
  double window_shift = 0.0;

  const Vehicle& vehicle(VehicleId id) const;
  Vehicle& vehicle(VehicleId id);
  const Vehicle& defender() const;
  std::vector<VehicleId> ids_with_role(Role role) const;

  friend bool operator==(const EnvState& a, const EnvState& b) {
    return a.road == b.road && a.vehicles == b.vehicles && a.step_index == b.step_index &&
           a.horizon == b.horizon && a.terminal == b.terminal &&
           a.terminal_reason == b.terminal_reason && a.window_shift == b.window_shift;
  }
};

using JointActions = std::map<VehicleId, Action>;

struct StepEvents {
  std::vector<std::pair<VehicleId, VehicleId>> collisions;
  bool defender_collision = false;
  std::vector<VehicleId> off_road;
};

struct StepResult {
  EnvState state;
  StepEvents events;
};

// Row 0 is the observer in the road frame; rows 1..4 are the nearest other
// vehicles relative to the observer, ascending by distance, zero padded.
struct Observation {
  static constexpr int kRows = 5;
  static constexpr int kFeatures = 5;
  std::array<std::array<double, kFeatures>, kRows> rows{};

  std::array<double, kRows * kFeatures> flat() const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

// Applies a meta-action to a vehicle's targets. Infeasible lane changes
// degrade to Idle; crashed vehicles are returned unchanged.
Vehicle apply_action(const RoadNetwork& road, const Vehicle& v, Action a,
                     const KinematicsConfig& limits);

StepEvents detect_collisions(const EnvState& state);
Observation observe(const EnvState& state, VehicleId agent);

// Nearest vehicle ahead / behind a longitudinal position on a lane, looking
// one lane-graph hop forward or backward. Gap is bumper to bumper.
struct LaneNeighbor {
  VehicleId id{};
  double gap = 0.0;
  double speed = 0.0;
};
std::optional<LaneNeighbor> find_leader(const EnvState& state, LaneId lane, double s,
                                        double length, std::optional<VehicleId> exclude);
std::optional<LaneNeighbor> find_follower(const EnvState& state, LaneId lane, double s,
                                          double length, std::optional<VehicleId> exclude);

class Simulator {
 public:
  Simulator(std::shared_ptr<const RoadNetwork> road, SimConfig config);

  const RoadNetwork& road() const { return *road_; }
  std::shared_ptr<const RoadNetwork> road_ptr() const { return road_; }
  const SimConfig& config() const { return config_; }

  // Deterministic in (road, counts, seed).
  EnvState reset(RoleCounts counts, std::uint64_t seed) const;
  StepResult step(const EnvState& state, const JointActions& actions) const;

  double policy_period() const { return config_.kinematics.dt * config_.kinematics.substeps; }

 private:
  void npc_lane_decisions(EnvState& state) const;
  void integrate_substep(EnvState& state) const;
  void advance_along_lane(Vehicle& v) const;
  void roll_highway_window(EnvState& state) const;
  void refresh_pose(Vehicle& v) const;

  std::shared_ptr<const RoadNetwork> road_;
  SimConfig config_;
};

}  // namespace avstress
