#include "avstress/road.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace avstress {
namespace {

constexpr double kRangeSlack = 1e-9;

std::string lane_label(const Lane& lane) {
  return "lane " + std::to_string(to_int(lane.id())) + " (" + lane.name() + ")";
}

}  // namespace

Lane::Lane(LaneId id, std::string name, LaneGeometry geometry, double width)
    : id_(id), name_(std::move(name)), geometry_(geometry), width_(width) {
  if (!(width > 0.0)) throw ConfigError("lane width must be positive");
  if (const auto* line = std::get_if<StraightGeometry>(&geometry_)) {
    const Vec2 delta = line->end - line->start;
    length_ = delta.norm();
    if (!(length_ > 0.0)) throw ConfigError("straight lane must have positive length");
    unit_ = (1.0 / length_) * delta;
    left_normal_ = {-unit_.y, unit_.x};
  } else {
    const auto& arc = std::get<ArcGeometry>(geometry_);
    if (!(arc.radius > 0.0)) throw ConfigError("arc lane radius must be positive");
    sign_ = arc.direction == ArcDirection::CounterClockwise ? 1.0 : -1.0;
    sweep_ = sign_ * (arc.end_angle - arc.start_angle);
    if (!(sweep_ > 0.0) || sweep_ > 2.0 * kPi + 1e-12) {
      throw ConfigError("arc lane sweep must lie in (0, 2pi]");
    }
    length_ = arc.radius * sweep_;
  }
}

double Lane::curvature() const {
  if (const auto* arc = std::get_if<ArcGeometry>(&geometry_)) return sign_ / arc->radius;
  return 0.0;
}

double Lane::heading_at(double s) const {
  if (std::holds_alternative<StraightGeometry>(geometry_)) return std::atan2(unit_.y, unit_.x);
  const auto& arc = std::get<ArcGeometry>(geometry_);
  const double theta = arc.start_angle + sign_ * s / arc.radius;
  return wrap_angle(theta + sign_ * 0.5 * kPi);
}

LocalCoord Lane::project(Vec2 p) const {
  if (const auto* line = std::get_if<StraightGeometry>(&geometry_)) {
    const Vec2 rel = p - line->start;
    return {rel.dot(unit_), rel.dot(left_normal_)};
  }
  const auto& arc = std::get<ArcGeometry>(geometry_);
  const Vec2 rel = p - arc.center;
  const double dist = rel.norm();
  const double theta = std::atan2(rel.y, rel.x);
  // Travel-direction angle from the start, in a window centered on the arc.
  double delta = sign_ * (theta - arc.start_angle);
  const double lo = 0.5 * sweep_ - kPi;
  delta = lo + std::fmod(std::fmod(delta - lo, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi);
  return {arc.radius * delta, sign_ * (arc.radius - dist)};
}

LocalCoord Lane::to_local(Vec2 p, double capture_distance) const {
  const LocalCoord local = project(p);
  if (std::abs(local.d) > capture_distance) {
    throw OutOfLaneError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                         ") is " + std::to_string(std::abs(local.d)) + " m from " +
                         lane_label(*this));
  }
  return local;
}

Pose Lane::to_world(double s, double d) const {
  if (s < -kRangeSlack || s > length_ + kRangeSlack) {
    throw RangeError("s=" + std::to_string(s) + " outside [0, " + std::to_string(length_) +
                     "] on " + lane_label(*this));
  }
  return to_world_unchecked(s, d);
}

Pose Lane::to_world_unchecked(double s, double d) const {
  if (const auto* line = std::get_if<StraightGeometry>(&geometry_)) {
    return {line->start + s * unit_ + d * left_normal_, std::atan2(unit_.y, unit_.x)};
  }
  const auto& arc = std::get<ArcGeometry>(geometry_);
  const double theta = arc.start_angle + sign_ * s / arc.radius;
  const double radial = arc.radius - sign_ * d;
  return {arc.center + radial * unit_from_angle(theta), wrap_angle(theta + sign_ * 0.5 * kPi)};
}

RoadNetwork::RoadNetwork(ScenarioKind kind, std::vector<Lane> lanes,
                         std::map<Role, std::vector<SpawnRegion>> spawn_regions,
                         GeometryConfig config)
    : kind_(kind),
      lanes_(std::move(lanes)),
      spawn_regions_(std::move(spawn_regions)),
      config_(config) {
  predecessors_.resize(lanes_.size());
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    if (to_int(lanes_[i].id()) != static_cast<std::int32_t>(i)) {
      throw ConfigError("lane ids must be dense and match their index");
    }
  }
  for (const Lane& lane : lanes_) {
    for (LaneId succ : lane.successors) {
      if (!has_lane(succ)) continue;
      predecessors_[to_int(succ)].push_back(lane.id());
      const Vec2 end = lane.to_world_unchecked(lane.length(), 0.0).position;
      successor_entries_[{to_int(lane.id()), to_int(succ)}] =
          std::max(0.0, lanes_[to_int(succ)].project(end).s);
    }
  }
  validate();
}

double RoadNetwork::successor_entry(LaneId from, LaneId to) const {
  const auto it = successor_entries_.find({to_int(from), to_int(to)});
  if (it == successor_entries_.end()) {
    throw RangeError("lane " + std::to_string(to_int(to)) + " is not a successor of lane " +
                     std::to_string(to_int(from)));
  }
  return it->second;
}

std::optional<LaneId> RoadNetwork::find_lane(std::string_view name) const {
  for (const Lane& lane : lanes_) {
    if (lane.name() == name) return lane.id();
  }
  return std::nullopt;
}

bool RoadNetwork::has_lane(LaneId id) const {
  return to_int(id) >= 0 && static_cast<std::size_t>(to_int(id)) < lanes_.size();
}

const Lane& RoadNetwork::lane(LaneId id) const {
  if (!has_lane(id)) throw RangeError("unknown lane id " + std::to_string(to_int(id)));
  return lanes_[to_int(id)];
}

const std::vector<LaneId>& RoadNetwork::predecessors(LaneId id) const {
  lane(id);
  return predecessors_[to_int(id)];
}

const std::vector<SpawnRegion>& RoadNetwork::spawn_regions(Role role) const {
  static const std::vector<SpawnRegion> kEmpty;
  const auto it = spawn_regions_.find(role);
  return it == spawn_regions_.end() ? kEmpty : it->second;
}

std::optional<double> RoadNetwork::neighbor_offset(LaneId from, LaneId other) const {
  if (from == other) return 0.0;
  const Lane& a = lane(from);
  const double spacing = 0.5 * (a.width() + lane(other).width());
  if (a.left_neighbor == other) return spacing;
  if (a.right_neighbor == other) return -spacing;
  return std::nullopt;
}

std::vector<LaneId> RoadNetwork::lateral_group(LaneId id) const {
  LaneId rightmost = id;
  while (auto r = lane(rightmost).right_neighbor) rightmost = *r;
  std::vector<LaneId> group{rightmost};
  while (auto l = lane(group.back()).left_neighbor) group.push_back(*l);
  return group;
}

void RoadNetwork::validate() const {
  for (const Lane& lane : lanes_) {
    for (LaneId succ : lane.successors) {
      if (!has_lane(succ)) throw ConfigError(lane_label(lane) + " has a dangling successor");
    }
    if (lane.left_neighbor) {
      if (!has_lane(*lane.left_neighbor)) {
        throw ConfigError(lane_label(lane) + " has a dangling left neighbor");
      }
      if (this->lane(*lane.left_neighbor).right_neighbor != lane.id()) {
        throw ConfigError(lane_label(lane) + " left neighbor relation is not symmetric");
      }
    }
    if (lane.right_neighbor) {
      if (!has_lane(*lane.right_neighbor)) {
        throw ConfigError(lane_label(lane) + " has a dangling right neighbor");
      }
      if (this->lane(*lane.right_neighbor).left_neighbor != lane.id()) {
        throw ConfigError(lane_label(lane) + " right neighbor relation is not symmetric");
      }
    }
  }
  for (Role role : {Role::Defender, Role::Attacker, Role::Npc}) {
    const auto& regions = spawn_regions(role);
    if (regions.empty()) {
      throw ConfigError("no spawn region for role " + std::string(to_string(role)));
    }
    for (const SpawnRegion& r : regions) {
      if (!has_lane(r.lane)) throw ConfigError("spawn region references unknown lane");
      if (!(r.s_min >= 0.0 && r.s_max <= lane(r.lane).length() && r.s_min <= r.s_max)) {
        throw ConfigError("spawn region outside " + lane_label(lane(r.lane)));
      }
    }
  }
}

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0)) throw ConfigError(std::string("geometry.") + name + " must be positive");
}

RoadNetwork build_highway(const GeometryConfig& cfg) {
  if (cfg.highway_lanes < 1) throw ConfigError("geometry.highway_lanes must be at least 1");
  std::vector<Lane> lanes;
  std::map<Role, std::vector<SpawnRegion>> spawn;
  const double w = cfg.lane_width;
  const double len = cfg.highway_length;
  // Lane 0 is the rightmost lane; travel is along +x so left is +y.
  for (int i = 0; i < cfg.highway_lanes; ++i) {
    const double y = i * w;
    Lane lane(LaneId{i}, "lane_" + std::to_string(i), StraightGeometry{{0.0, y}, {len, y}}, w);
    if (i > 0) lane.right_neighbor = LaneId{i - 1};
    if (i + 1 < cfg.highway_lanes) lane.left_neighbor = LaneId{i + 1};
    lanes.push_back(std::move(lane));
  }
  // Vehicles start in a band around 0.25 * len; the rolling window keeps the
  // defender away from both ends afterwards.
  const double center = 0.25 * len;
  for (int i = 0; i < cfg.highway_lanes; ++i) {
    spawn[Role::Defender].push_back({LaneId{i}, center - 20.0, center + 20.0});
    spawn[Role::Npc].push_back({LaneId{i}, center - 120.0, center + 180.0});
    spawn[Role::Attacker].push_back({LaneId{i}, center - 120.0, center + 180.0});
  }
  for (auto& [role, regions] : spawn) {
    for (auto& r : regions) {
      r.s_min = std::clamp(r.s_min, 0.0, len);
      r.s_max = std::clamp(r.s_max, 0.0, len);
    }
  }
  return RoadNetwork(ScenarioKind::Highway, std::move(lanes), std::move(spawn), cfg);
}

RoadNetwork build_merge(const GeometryConfig& cfg) {
  require_positive(cfg.merge_main_length, "merge_main_length");
  require_positive(cfg.merge_junction, "merge_junction");
  require_positive(cfg.merge_lane_length, "merge_lane_length");
  require_positive(cfg.merge_lane_offset, "merge_lane_offset");
  if (cfg.merge_junction >= cfg.merge_main_length) {
    throw ConfigError("geometry.merge_junction must lie before the end of the main road");
  }
  if (cfg.merge_lane_offset >= cfg.merge_lane_length) {
    throw ConfigError("geometry.merge_lane_offset must be shorter than merge_lane_length");
  }
  const double w = cfg.lane_width;
  const double len = cfg.merge_main_length;
  std::vector<Lane> lanes;
  Lane right(LaneId{0}, "main_right", StraightGeometry{{0.0, 0.0}, {len, 0.0}}, w);
  Lane left(LaneId{1}, "main_left", StraightGeometry{{0.0, w}, {len, w}}, w);
  right.left_neighbor = LaneId{1};
  left.right_neighbor = LaneId{0};
  // The downside lane approaches from below and ends on the right main lane
  // centerline at the junction; vehicles continue there by projection.
  const double run = std::sqrt(cfg.merge_lane_length * cfg.merge_lane_length -
                               cfg.merge_lane_offset * cfg.merge_lane_offset);
  Lane merge(LaneId{2}, "merge",
             StraightGeometry{{cfg.merge_junction - run, -cfg.merge_lane_offset},
                              {cfg.merge_junction, 0.0}},
             w);
  merge.successors = {LaneId{0}};
  lanes.push_back(std::move(right));
  lanes.push_back(std::move(left));
  lanes.push_back(std::move(merge));

  std::map<Role, std::vector<SpawnRegion>> spawn;
  const double main_hi = std::min(cfg.merge_junction, len);
  const double merge_len = cfg.merge_lane_length;
  for (int i = 0; i < 2; ++i) {
    spawn[Role::Defender].push_back({LaneId{i}, 0.1 * main_hi, 0.45 * main_hi});
    spawn[Role::Npc].push_back({LaneId{i}, 0.0, main_hi});
  }
  // The first attacker region is the downside lane; the rest are main lanes.
  spawn[Role::Attacker].push_back({LaneId{2}, 0.1 * merge_len, 0.6 * merge_len});
  for (int i = 0; i < 2; ++i) spawn[Role::Attacker].push_back({LaneId{i}, 0.05 * main_hi, 0.8 * main_hi});
  return RoadNetwork(ScenarioKind::Merge, std::move(lanes), std::move(spawn), cfg);
}

RoadNetwork build_roundabout(const GeometryConfig& cfg) {
  require_positive(cfg.roundabout_radius, "roundabout_radius");
  require_positive(cfg.roundabout_entry_length, "roundabout_entry_length");
  const double w = cfg.lane_width;
  const double r_inner = cfg.roundabout_radius;
  const double r_outer = r_inner + w;
  const double half = 0.5 * w;
  // Entry/exit straights sit half a lane width either side of each axis and
  // meet the outer ring where it crosses those offsets.
  const double reach = std::sqrt(r_outer * r_outer - half * half);
  const double delta = std::atan2(half, reach);
  const Vec2 center{0.0, 0.0};

  std::vector<Lane> lanes;
  lanes.reserve(24);
  auto add = [&](Lane lane) { lanes.push_back(std::move(lane)); };
  auto entry_id = [](int k) { return LaneId{k}; };
  auto exit_id = [](int k) { return LaneId{4 + k}; };
  auto outer_a = [](int k) { return LaneId{8 + k}; };
  auto outer_b = [](int k) { return LaneId{12 + k}; };
  auto inner_a = [](int k) { return LaneId{16 + k}; };
  auto inner_b = [](int k) { return LaneId{20 + k}; };

  for (int k = 0; k < 4; ++k) {
    const double alpha = k * 0.5 * kPi;
    const Vec2 axis = unit_from_angle(alpha);
    const Vec2 perp = unit_from_angle(alpha + 0.5 * kPi);
    Lane entry(entry_id(k), "entry_" + std::to_string(k),
               StraightGeometry{(reach + cfg.roundabout_entry_length) * axis + half * perp,
                                reach * axis + half * perp},
               w);
    entry.successors = {outer_a(k)};
    add(std::move(entry));
  }
  for (int k = 0; k < 4; ++k) {
    const double alpha = k * 0.5 * kPi;
    const Vec2 axis = unit_from_angle(alpha);
    const Vec2 perp = unit_from_angle(alpha + 0.5 * kPi);
    add(Lane(exit_id(k), "exit_" + std::to_string(k),
             StraightGeometry{reach * axis - half * perp,
                              (reach + cfg.roundabout_entry_length) * axis - half * perp},
             w));
  }
  // Ring pieces, counterclockwise: A_k runs from entry k to exit k+1, B_k is
  // the short piece between exit k and entry k.
  for (int ring = 0; ring < 2; ++ring) {
    const bool outer = ring == 0;
    const double radius = outer ? r_outer : r_inner;
    const std::string tag = outer ? "outer" : "inner";
    for (int k = 0; k < 4; ++k) {
      const double alpha = k * 0.5 * kPi;
      Lane a(outer ? outer_a(k) : inner_a(k), tag + "_a" + std::to_string(k),
             ArcGeometry{center, radius, alpha + delta, alpha + 0.5 * kPi - delta,
                         ArcDirection::CounterClockwise},
             w);
      const int next = (k + 1) % 4;
      if (outer) {
        a.successors = {outer_b(next), exit_id(next)};
        a.left_neighbor = inner_a(k);
      } else {
        a.successors = {inner_b(next)};
        a.right_neighbor = outer_a(k);
      }
      add(std::move(a));
    }
    for (int k = 0; k < 4; ++k) {
      const double alpha = k * 0.5 * kPi;
      Lane b(outer ? outer_b(k) : inner_b(k), tag + "_b" + std::to_string(k),
             ArcGeometry{center, radius, alpha - delta, alpha + delta,
                         ArcDirection::CounterClockwise},
             w);
      b.successors = {outer ? outer_a(k) : inner_a(k)};
      if (outer) {
        b.left_neighbor = inner_b(k);
      } else {
        b.right_neighbor = outer_b(k);
      }
      add(std::move(b));
    }
  }
  std::sort(lanes.begin(), lanes.end(),
            [](const Lane& a, const Lane& b) { return to_int(a.id()) < to_int(b.id()); });

  std::map<Role, std::vector<SpawnRegion>> spawn;
  const double entry_len = cfg.roundabout_entry_length;
  for (int k = 0; k < 4; ++k) {
    spawn[Role::Defender].push_back({entry_id(k), 0.1 * entry_len, 0.5 * entry_len});
  }
  for (int k = 0; k < 4; ++k) {
    for (LaneId id : {outer_a(k), inner_a(k)}) {
      const double len = lanes[to_int(id)].length();
      spawn[Role::Attacker].push_back({id, 0.1 * len, 0.9 * len});
      spawn[Role::Npc].push_back({id, 0.1 * len, 0.9 * len});
    }
  }
  return RoadNetwork(ScenarioKind::Roundabout, std::move(lanes), std::move(spawn), cfg);
}

}  // namespace

RoadNetwork build_scenario(ScenarioKind kind, const GeometryConfig& config) {
  require_positive(config.lane_width, "lane_width");
  require_positive(config.highway_length, "highway_length");
  require_positive(config.despawn_distance, "despawn_distance");
  require_positive(config.capture_distance, "capture_distance");
  switch (kind) {
    case ScenarioKind::Highway: return build_highway(config);
    case ScenarioKind::Merge: return build_merge(config);
    case ScenarioKind::Roundabout: return build_roundabout(config);
  }
  throw ConfigError("invalid scenario kind");
}

}  // namespace avstress
