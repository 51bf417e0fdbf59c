#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avstress/defender.hpp"
#include "avstress/marl.hpp"
#include "avstress/mdp.hpp"
#include "avstress/road.hpp"
#include "avstress/sim.hpp"

namespace avstress {

inline constexpr const char* kCodeVersion = "0.1.0";

struct DefenderSpec {
  DefenderKind type = DefenderKind::Vi;
  // Learned defenders: checkpoint to load. When absent the harness looks in
  // the run's defender directory and trains one if nothing is there.
  std::optional<std::string> checkpoint;
  AbstractionConfig abstraction;
  DefenderRewardConfig reward;
  int train_npcs = 4;
  D3qnConfig d3qn;
  PpoDefenderConfig ppo;
};

struct EvalConfig {
  int episodes = 200;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Sample attacker actions instead of taking the argmax.
  bool stochastic = false;
};

struct ExperimentConfig {
  ScenarioKind scenario = ScenarioKind::Highway;
  int n_attackers = 2;
  int n_npcs = 4;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  DefenderSpec defender;
  HarConfig har;
  ShapingConfig shaping;
  AttackTrainConfig train;
  int checkpoint_every = 10;  // iterations
  int trace_every = 50;       // iterations
  EvalConfig eval;
  GeometryConfig geometry;
  SimConfig sim;
};

// Defaults for a scenario, including the scenario-specific kinematics,
// abstraction speed levels and shaping weight.
ExperimentConfig default_config(ScenarioKind kind);

// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys and type mismatches are errors with a field path.
// Missing keys take the scenario defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
// Reads the file. Missing or unreadable files are ConfigErrors.
ExperimentConfig parse_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Hash of the canonical JSON without the eval and output sections, so the
// same trained artifacts can be evaluated under different eval budgets.
std::uint64_t config_hash(const ExperimentConfig& cfg);
// Hash of what a learned defender depends on: road, traffic, defender settings
// (checkpoint path excluded) and seed.
std::uint64_t defender_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

}  // namespace avstress
