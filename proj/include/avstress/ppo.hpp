#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "avstress/nn.hpp"
#include "avstress/rng.hpp"

namespace avstress {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double value_clip = 0.2;
  double entropy_coef = 0.01;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  int epochs = 10;
  int minibatches = 4;
  double max_grad_norm = 0.5;
  // Log-ratio is clamped to this magnitude before exponentiation.
  double log_ratio_clamp = 20.0;

  friend bool operator==(const PpoConfig&, const PpoConfig&) = default;
};

void validate(const PpoConfig& cfg);

// Transitions laid out stream-major: sample i = stream * steps + t. A stream
// is one agent slot in one environment, so GAE runs along each stream.
struct RolloutBatch {
  int streams = 0;
  int steps = 0;
  Eigen::MatrixXd obs;  // kObservationDim x (streams * steps), encoded
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  // Environment reported terminal after this transition.
  std::vector<std::uint8_t> dones;
  // Agent was able to act (not crashed, still on the network). Only valid
  // samples enter the actor loss.
  std::vector<std::uint8_t> valid;
  std::vector<double> bootstrap_values;  // per stream
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
  void resize(int streams, int steps);
  // Throws DimensionError if any sequence length disagrees.
  void check_shapes() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t,
// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, R_t = A_t + V_t.
// V_T is bootstrap_value.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap_value,
                      double gamma, double gae_lambda);

// Fills batch.advantages and batch.returns stream by stream.
void compute_batch_gae(RolloutBatch& batch, double gamma, double gae_lambda);

// Zero mean, unit variance over the samples with mask set (all when empty).
void normalize_advantages(std::vector<double>& advantages,
                          const std::vector<std::uint8_t>& mask = {});

struct LossResult {
  double loss = 0.0;
  NetParams grads;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// Negative clipped surrogate minus entropy bonus, averaged over the columns.
LossResult actor_loss(const NetParams& actor, const Eigen::MatrixXd& obs,
                      const std::vector<int>& actions, const Eigen::VectorXd& old_log_probs,
                      const Eigen::VectorXd& advantages, const PpoConfig& cfg);

// Mean of max(unclipped, value-clipped) squared errors.
LossResult critic_loss(const NetParams& critic, const Eigen::MatrixXd& obs,
                       const Eigen::VectorXd& old_values, const Eigen::VectorXd& returns,
                       const PpoConfig& cfg);

struct UpdateMetrics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int optimizer_steps = 0;
};

// Normalizes advantages, then runs `epochs` passes of shuffled minibatches,
// one Adam step each for actor and critic. Used by the attacker trainer and
// the PPO defender alike.
UpdateMetrics mappo_update(RolloutBatch& batch, NetParams& actor, NetParams& critic,
                           OptState& actor_opt, OptState& critic_opt, const PpoConfig& cfg,
                           Rng& rng);

}  // namespace avstress
