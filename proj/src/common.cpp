#include "avstress/common.hpp"

#include <string>

namespace avstress {

Action action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw RangeError("action index out of range: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Defender: return "defender";
    case Role::Attacker: return "attacker";
    case Role::Npc: return "npc";
  }
  return "unknown";
}

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Highway: return "highway";
    case ScenarioKind::Merge: return "merge";
    case ScenarioKind::Roundabout: return "roundabout";
  }
  return "unknown";
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::Idle: return "idle";
    case Action::Faster: return "faster";
    case Action::Slower: return "slower";
    case Action::LaneLeft: return "lane_left";
    case Action::LaneRight: return "lane_right";
  }
  return "unknown";
}

Role role_from_string(std::string_view s) {
  if (s == "defender") return Role::Defender;
  if (s == "attacker") return Role::Attacker;
  if (s == "npc") return Role::Npc;
  throw ConfigError("unknown role '" + std::string(s) + "'");
}

ScenarioKind scenario_from_string(std::string_view s) {
  if (s == "highway") return ScenarioKind::Highway;
  if (s == "merge") return ScenarioKind::Merge;
  if (s == "roundabout") return ScenarioKind::Roundabout;
  throw ConfigError("unknown scenario kind '" + std::string(s) + "'");
}

Action action_from_string(std::string_view s) {
  for (Action a : kAllActions) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown action '" + std::string(s) + "'");
}

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  return r - kPi;
}

}  // namespace avstress
