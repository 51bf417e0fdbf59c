#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avstress/config.hpp"
#include "avstress/marl.hpp"

namespace avstress {

inline constexpr int kTraceVersion = 1;

struct TraceVehicle {
  VehicleId id{};
  Role role = Role::Npc;
  std::string lane;
  double s = 0.0;
  double d = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double length = 0.0;
  double width = 0.0;
  bool crashed = false;
  bool exited = false;
};

struct TraceStep {
  int index = 0;
  JointActions actions;
  std::map<VehicleId, RewardComponents> rewards;
  StepEvents events;
  std::vector<TraceVehicle> vehicles;
  bool terminal = false;
  std::optional<TerminalReason> terminal_reason;
};

struct Trace {
  int version = kTraceVersion;
  std::string code_version = kCodeVersion;
  std::string config_hash;
  nlohmann::json config;  // resolved experiment config
  ScenarioKind scenario = ScenarioKind::Highway;
  std::uint64_t reset_seed = 0;
  RoleCounts counts;
  std::vector<TraceVehicle> initial;
  std::vector<TraceStep> steps;
};

std::vector<TraceVehicle> snapshot(const EnvState& state);
Trace make_trace(const ExperimentConfig& cfg, const EpisodeRecord& episode);

nlohmann::json trace_to_json(const Trace& trace);
// Throws IntegrityError on malformed content or a schema version mismatch.
Trace trace_from_json(const nlohmann::json& j);

void save_trace(const Trace& trace, const std::filesystem::path& path);
// Missing file: ArtifactError. Malformed or wrong version: IntegrityError.
Trace load_trace(const std::filesystem::path& path);

struct ReplayResult {
  int steps_checked = 0;
  double max_deviation = 0.0;
  bool code_version_mismatch = false;
};

// Re-simulates the recorded actions from the trace's seed and compares every
// recorded vehicle state. Throws IntegrityError naming the first step whose
// state deviates by more than tol.
ReplayResult replay_trace(const Trace& trace, double tol = 1e-9, std::ostream* log = nullptr);

}  // namespace avstress
