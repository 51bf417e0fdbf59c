#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "avstress/defender.hpp"
#include "avstress/nn.hpp"
#include "avstress/ppo.hpp"
#include "avstress/sim.hpp"

namespace avstress {

// R_HAR = R_C + P_agg. In collision_only mode P_agg is dropped, which is the
// reference the aggressiveness comparison trains against.
enum class RewardMode { Har, CollisionOnly };
std::string_view to_string(RewardMode mode);
RewardMode reward_mode_from_string(std::string_view s);

struct HarConfig {
  double phi = 10.0;
  double rho = -10.5;
  double lambda_accel = 3.5;
  RewardMode mode = RewardMode::Har;

  friend bool operator==(const HarConfig&, const HarConfig&) = default;
};
void validate(const HarConfig& cfg);

struct ShapingConfig {
  double w_d = 0.05;
  double d_max = 60.0;

  friend bool operator==(const ShapingConfig&, const ShapingConfig&) = default;
};
// The roundabout's longer horizon needs a smaller w_d to keep the per-episode
// shaping total below phi / 2.
ShapingConfig default_shaping(ScenarioKind kind);
void validate(const ShapingConfig& cfg);

// Lane-change action or realized |accel| above the threshold.
bool is_aggressive(Action action, double accel, double lambda_accel);

double har_reward(const StepEvents& events, Action action, double accel, const HarConfig& cfg);
double distance_reward(const EnvState& state, VehicleId attacker, const ShapingConfig& cfg);

struct RewardComponents {
  double r_c = 0.0;
  double p_agg = 0.0;
  double r_d = 0.0;

  double har() const { return r_c + p_agg; }
  double total() const { return r_c + p_agg + r_d; }
};

// `active` is false for attackers that were crashed or gone before the step:
// they chose nothing, so no aggressiveness penalty applies.
RewardComponents attacker_reward_components(const StepEvents& events, Action action, double accel,
                                            const EnvState& next, VehicleId attacker,
                                            const HarConfig& har, const ShapingConfig& shaping,
                                            bool active = true);
double attacker_reward(const StepEvents& events, Action action, double accel,
                       const EnvState& next, VehicleId attacker, const HarConfig& har,
                       const ShapingConfig& shaping);

struct AttackEnv {
  const Simulator* sim = nullptr;
  RoleCounts counts{2, 4};
  HarConfig har;
  ShapingConfig shaping;
};

enum class AttackerControl { Sample, Greedy, Random, Idle };

// Attacker-side statistics accumulated over completed episodes.
struct EpisodeStats {
  int episodes = 0;
  int defender_collisions = 0;
  int defender_off_road = 0;
  int route_completed = 0;
  double har_sum = 0.0;  // per-attacker episode HAR, summed over attackers and episodes
  std::int64_t attacker_steps = 0;
  std::int64_t aggressive_steps = 0;

  double success_rate() const { return episodes ? double(defender_collisions) / episodes : 0.0; }
  double mean_episode_har(int attackers) const {
    return episodes && attackers ? har_sum / (double(episodes) * attackers) : 0.0;
  }
  double aggressive_rate() const {
    return attacker_steps ? double(aggressive_steps) / double(attacker_steps) : 0.0;
  }
  void merge(const EpisodeStats& o);
};

// One recorded policy step of an episode.
struct StepRecord {
  JointActions actions;
  std::map<VehicleId, RewardComponents> rewards;
  std::map<VehicleId, double> accel;
  StepEvents events;
  EnvState state;  // after the step
};

struct EpisodeRecord {
  std::uint64_t reset_seed = 0;
  RoleCounts counts;
  EnvState initial;
  std::vector<StepRecord> steps;
};

// Chooses attacker actions for one state. Sample/Greedy need an actor.
JointActions attacker_actions(const EnvState& state, AttackerControl control,
                              const NetParams* actor, Rng& rng,
                              std::vector<double>* log_probs = nullptr);

// Runs one episode from reset(counts, reset_seed) to termination.
EpisodeRecord run_episode(const AttackEnv& env, const DefenderPolicy& defender,
                          AttackerControl control, const NetParams* actor,
                          std::uint64_t reset_seed, Rng& rng, EpisodeStats* stats = nullptr);

// Parallel environments stepped in lockstep for on-policy collection.
class RolloutCollector {
 public:
  RolloutCollector(AttackEnv env, int num_envs, std::uint64_t seed);

  // Steps every environment T policy steps with all attackers sharing the
  // same actor snapshot; resets terminal environments automatically.
  RolloutBatch collect(const NetParams& actor, const NetParams& critic,
                       const DefenderPolicy& defender, int T, Rng& rng);

  const EpisodeStats& stats() const { return stats_; }
  void clear_stats() { stats_ = {}; }
  int streams() const { return num_envs_ * env_.counts.attackers; }
  // Fingerprint of the actor used for the last collected batch.
  std::uint64_t last_policy_fingerprint() const { return fingerprint_; }

 private:
  EnvState fresh(int e);

  AttackEnv env_;
  int num_envs_;
  std::uint64_t seed_;
  std::vector<EnvState> states_;
  std::vector<std::uint64_t> episodes_;
  std::vector<double> har_running_;
  EpisodeStats stats_;
  std::uint64_t fingerprint_ = 0;
};

struct AttackTrainConfig {
  PpoConfig ppo;
  std::vector<int> hidden{64, 64};
  int envs = 8;
  int rollout_len = 128;
  std::int64_t total_steps = 300000;

  friend bool operator==(const AttackTrainConfig&, const AttackTrainConfig&) = default;
};
void validate(const AttackTrainConfig& cfg);

struct AttackerState {
  NetParams actor;
  NetParams critic;
  OptState actor_opt;
  OptState critic_opt;
  int iteration = 0;
  std::int64_t env_steps = 0;
};

AttackerState init_attackers(const AttackTrainConfig& cfg, std::uint64_t seed);

struct IterationReport {
  int iteration = 0;
  std::int64_t env_steps = 0;
  UpdateMetrics update;
  EpisodeStats window;
};

class AttackerTrainer {
 public:
  AttackerTrainer(AttackEnv env, DefenderPolicy defender, AttackTrainConfig cfg,
                  std::uint64_t seed, AttackerState state);

  bool done() const { return state_.env_steps >= cfg_.total_steps; }
  // One rollout plus one policy update. Randomness is derived from
  // (seed, iteration) so a resumed run continues deterministically.
  IterationReport iterate();

  const AttackerState& state() const { return state_; }
  const AttackEnv& env() const { return env_; }
  const DefenderPolicy& defender() const { return defender_; }

 private:
  AttackEnv env_;
  DefenderPolicy defender_;
  AttackTrainConfig cfg_;
  std::uint64_t seed_;
  AttackerState state_;
  RolloutCollector collector_;
};

}  // namespace avstress
