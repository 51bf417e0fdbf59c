#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "avstress/mdp.hpp"
#include "avstress/nn.hpp"
#include "avstress/ppo.hpp"
#include "avstress/sim.hpp"

namespace avstress {

enum class DefenderKind { Vi, Rvi, D3qn, Ppo };
std::string_view to_string(DefenderKind kind);
DefenderKind defender_kind_from_string(std::string_view s);

struct DefenderPolicy {
  DefenderKind kind = DefenderKind::Vi;
  AbstractionConfig abstraction;
  // D3QN: 25 -> ... -> 6 (value, five advantages). PPO: 25 -> ... -> 5 logits.
  NetParams net;
  std::uint64_t config_hash = 0;
};

DefenderPolicy make_dp_defender(DefenderKind kind, const AbstractionConfig& abstraction);

// Q = value + advantages - mean(advantages).
Eigen::VectorXd dueling_q(double value, const Eigen::VectorXd& advantages);
// Column-wise dueling combine of raw network outputs (row 0 value, rows 1.. advantages).
Eigen::MatrixXd dueling_q(const Eigen::MatrixXd& raw);
// Maps dL/dQ back to dL/d(raw output).
Eigen::MatrixXd dueling_backward(const Eigen::MatrixXd& grad_q);

// VI / RVI solution of the abstraction.
SolveResult solve_abstraction(const DefenderPolicy& policy, const MdpAbstraction& abstraction);

// Greedy actions; ties resolve to the lowest action index. Kind mismatches
// throw UsageError.
Action defender_act(const DefenderPolicy& policy, const MdpAbstraction& abstraction);
Action defender_act(const DefenderPolicy& policy, const Observation& obs);
// Dispatches on the policy kind.
Action defender_act(const DefenderPolicy& policy, const EnvState& state);

// "Collision avoidance and high-speed keeping" training signal.
struct DefenderRewardConfig {
  double w_v = 0.4;
  double w_c = 1.0;

  friend bool operator==(const DefenderRewardConfig&, const DefenderRewardConfig&) = default;
};

double defender_reward(const EnvState& next, const StepEvents& events,
                       const DefenderRewardConfig& cfg, double v_max);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Eigen::VectorXd& obs, int action, double reward, const Eigen::VectorXd& next_obs,
            bool done);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  Eigen::MatrixXd obs;       // dim x capacity
  Eigen::MatrixXd next_obs;  // dim x capacity
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
};

struct D3qnConfig {
  std::vector<int> hidden{64, 64};
  std::size_t replay_capacity = 50000;
  int batch_size = 64;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 30000;
  int target_sync = 1000;
  double gamma = 0.99;
  int total_steps = 100000;
  int learning_starts = 1000;
  int train_every = 1;
  double learning_rate = 5e-4;
  double max_grad_norm = 10.0;
  double huber_delta = 1.0;

  friend bool operator==(const D3qnConfig&, const D3qnConfig&) = default;
};

struct PpoDefenderConfig {
  std::vector<int> hidden{64, 64};
  PpoConfig ppo;
  int envs = 8;
  int rollout_len = 128;
  int total_steps = 100000;

  friend bool operator==(const PpoDefenderConfig&, const PpoDefenderConfig&) = default;
};

// Traffic the defender is trained in: NPCs only.
struct DefenderEnv {
  const Simulator* sim = nullptr;
  int npcs = 4;
  DefenderRewardConfig reward;
};

struct DefenderTrainProgress {
  std::int64_t steps = 0;
  int episodes = 0;
  double mean_return = 0.0;
  double collision_rate = 0.0;
};
using DefenderProgressFn = std::function<void(const DefenderTrainProgress&)>;

struct D3qnResult {
  DefenderPolicy policy;
  NetParams online;
  NetParams target;
  OptState opt;
  std::int64_t steps = 0;
};

// Double-Q targets y = r + gamma (1 - done) Q_target(s', argmax_a Q_online(s', a)).
Eigen::VectorXd double_q_targets(const NetParams& online, const NetParams& target,
                                 const Eigen::MatrixXd& next_obs, const Eigen::VectorXd& rewards,
                                 const std::vector<std::uint8_t>& dones, double gamma);

D3qnResult train_d3qn(const DefenderEnv& env, const D3qnConfig& cfg, std::uint64_t seed,
                      const DefenderProgressFn& progress = {});

struct PpoDefenderResult {
  DefenderPolicy policy;
  NetParams actor;
  NetParams critic;
  OptState actor_opt;
  OptState critic_opt;
  std::int64_t steps = 0;
};

PpoDefenderResult train_ppo_defender(const DefenderEnv& env, const PpoDefenderConfig& cfg,
                                     std::uint64_t seed, const DefenderProgressFn& progress = {});

}  // namespace avstress
