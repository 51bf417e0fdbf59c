#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avstress {

inline constexpr double kPi = 3.14159265358979323846;

// Error taxonomy. The CLI maps each family onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class RangeError : public Error {
 public:
  using Error::Error;
};
class OutOfLaneError : public Error {
 public:
  using Error::Error;
};
class InitializationError : public Error {
 public:
  using Error::Error;
};
class UsageError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class NumericError : public Error {
 public:
  using Error::Error;
};
class ArtifactError : public Error {
 public:
  using Error::Error;
};
class IntegrityError : public Error {
 public:
  using Error::Error;
};

enum class LaneId : std::int32_t {};
enum class VehicleId : std::int32_t {};

constexpr std::int32_t to_int(LaneId id) { return static_cast<std::int32_t>(id); }
constexpr std::int32_t to_int(VehicleId id) { return static_cast<std::int32_t>(id); }

enum class Role { Defender, Attacker, Npc };
enum class ScenarioKind { Highway, Merge, Roundabout };

// Index order is fixed: network output heads use it directly.
enum class Action : int { Idle = 0, Faster = 1, Slower = 2, LaneLeft = 3, LaneRight = 4 };
inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::Idle, Action::Faster, Action::Slower, Action::LaneLeft, Action::LaneRight};

constexpr int to_index(Action a) { return static_cast<int>(a); }
Action action_from_index(int index);
inline bool is_lane_change(Action a) { return a == Action::LaneLeft || a == Action::LaneRight; }

std::string_view to_string(Role role);
std::string_view to_string(ScenarioKind kind);
std::string_view to_string(Action action);
Role role_from_string(std::string_view s);
ScenarioKind scenario_from_string(std::string_view s);
Action action_from_string(std::string_view s);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend Vec2 operator*(Vec2 a, double k) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }

// Wraps to [-pi, pi).
double wrap_angle(double a);

}  // namespace avstress
