#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "avstress/common.hpp"

namespace avstress {

struct StraightGeometry {
  Vec2 start;
  Vec2 end;
};

enum class ArcDirection { CounterClockwise, Clockwise };

struct ArcGeometry {
  Vec2 center;
  double radius = 0.0;
  double start_angle = 0.0;
  double end_angle = 0.0;
  ArcDirection direction = ArcDirection::CounterClockwise;
};

using LaneGeometry = std::variant<StraightGeometry, ArcGeometry>;

// Lane-local coordinates: s is arc length along the centerline from the lane
// start, d is the signed lateral offset, positive to the left of travel.
struct LocalCoord {
  double s = 0.0;
  double d = 0.0;
};

struct Pose {
  Vec2 position;
  double heading = 0.0;
};

class Lane {
 public:
  Lane(LaneId id, std::string name, LaneGeometry geometry, double width);

  LaneId id() const { return id_; }
  const std::string& name() const { return name_; }
  const LaneGeometry& geometry() const { return geometry_; }
  double width() const { return width_; }
  double length() const { return length_; }
  bool is_arc() const { return std::holds_alternative<ArcGeometry>(geometry_); }

  // Signed curvature of the centerline, positive when turning left.
  double curvature() const;
  double heading_at(double s) const;

  // Throws OutOfLaneError when |d| exceeds capture_distance.
  LocalCoord to_local(Vec2 p, double capture_distance) const;
  // Throws RangeError when s lies outside [0, length].
  Pose to_world(double s, double d) const;
  // No range checks; used when extrapolating slightly past lane ends.
  Pose to_world_unchecked(double s, double d) const;
  LocalCoord project(Vec2 p) const;

  std::vector<LaneId> successors;
  std::optional<LaneId> left_neighbor;
  std::optional<LaneId> right_neighbor;

 private:
  LaneId id_;
  std::string name_;
  LaneGeometry geometry_;
  double width_;
  double length_;
  // Cached for straight lanes.
  Vec2 unit_{};
  Vec2 left_normal_{};
  // Cached for arcs.
  double sweep_ = 0.0;
  double sign_ = 1.0;
};

struct SpawnRegion {
  LaneId lane{};
  double s_min = 0.0;
  double s_max = 0.0;
};

struct GeometryConfig {
  double lane_width = 4.0;
  int highway_lanes = 4;
  double highway_length = 1000.0;
  double despawn_distance = 250.0;
  double merge_main_length = 500.0;
  double merge_junction = 250.0;
  double merge_lane_length = 150.0;
  double merge_lane_offset = 15.0;
  double roundabout_radius = 30.0;
  double roundabout_entry_length = 120.0;
  double capture_distance = 6.0;

  friend bool operator==(const GeometryConfig&, const GeometryConfig&) = default;
};

// Immutable after construction; safe to share read-only between environments.
class RoadNetwork {
 public:
  RoadNetwork(ScenarioKind kind, std::vector<Lane> lanes,
              std::map<Role, std::vector<SpawnRegion>> spawn_regions, GeometryConfig config);

  ScenarioKind kind() const { return kind_; }
  const GeometryConfig& config() const { return config_; }
  const std::vector<Lane>& lanes() const { return lanes_; }
  const Lane& lane(LaneId id) const;
  bool has_lane(LaneId id) const;
  const std::vector<LaneId>& predecessors(LaneId id) const;
  const std::vector<SpawnRegion>& spawn_regions(Role role) const;

  // Lateral offset of `other` relative to `from` when they are neighbors:
  // +width for the left neighbor, -width for the right neighbor, 0 if equal.
  std::optional<double> neighbor_offset(LaneId from, LaneId other) const;

  // Lanes that share a cross-section with `id`, ordered right to left.
  std::vector<LaneId> lateral_group(LaneId id) const;

  // Longitudinal position on `to` where a vehicle leaving the end of `from`
  // arrives. Zero for geometrically chained lanes; the junction position for
  // a merging lane. Throws RangeError if `to` is not a successor of `from`.
  double successor_entry(LaneId from, LaneId to) const;

  std::optional<LaneId> find_lane(std::string_view name) const;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;

 private:
  ScenarioKind kind_;
  std::vector<Lane> lanes_;
  std::vector<std::vector<LaneId>> predecessors_;
  std::map<std::pair<std::int32_t, std::int32_t>, double> successor_entries_;
  std::map<Role, std::vector<SpawnRegion>> spawn_regions_;
  GeometryConfig config_;
};

RoadNetwork build_scenario(ScenarioKind kind, const GeometryConfig& config = {});

}  // namespace avstress
