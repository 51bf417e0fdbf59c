#pragma once

#include <vector>

#include <Eigen/Dense>

#include "avstress/sim.hpp"

namespace avstress {

struct Transition {
  int next = 0;
  double prob = 0.0;
};

using TransitionRow = std::vector<Transition>;

struct FiniteMdp {
  int num_states = 0;
  int num_actions = 0;
  // transitions[s][a] is a sparse distribution over next states.
  std::vector<std::vector<TransitionRow>> transitions;
  Eigen::MatrixXd reward;  // num_states x num_actions

  // Throws ConfigError on bad indices, rows not summing to 1 within 1e-9, or
  // non-finite rewards.
  void validate() const;
};

// Rectangular uncertainty: models[s][a] lists candidate distributions; the
// first is the nominal one.
struct UncertaintySet {
  std::vector<std::vector<std::vector<TransitionRow>>> models;

  static UncertaintySet nominal_only(const FiniteMdp& mdp);
  void validate(const FiniteMdp& mdp) const;
};

struct SolveResult {
  Eigen::MatrixXd q;  // num_states x num_actions
  // Sup-norm change of Q per sweep.
  std::vector<double> residuals;
  int sweeps = 0;
};

inline constexpr int kMaxSweeps = 10000;

// Synchronous sweeps until the sup-norm residual drops below tol. Throws
// ConfigError for gamma outside [0, 1) or tol <= 0 and NumericError when
// max_sweeps is exhausted.
SolveResult value_iteration(const FiniteMdp& mdp, double gamma, double tol,
                            int max_sweeps = kMaxSweeps);
SolveResult robust_value_iteration(const FiniteMdp& mdp, const UncertaintySet& uncertainty,
                                   double gamma, double tol, int max_sweeps = kMaxSweeps);

struct AbstractionConfig {
  // Target speeds the defender can hold, m/s, ascending and speed_step apart.
  std::vector<double> speed_levels{20.0, 25.0, 30.0};
  int ttc_buckets = 8;
  double ttc_horizon = 8.0;  // seconds covered by the buckets
  double w_v = 0.4;
  double w_c = 1.0;
  double gamma = 0.95;
  double tol = 1e-6;

  friend bool operator==(const AbstractionConfig&, const AbstractionConfig&) = default;
};

AbstractionConfig default_abstraction(ScenarioKind kind);
void validate(const AbstractionConfig& cfg);

// Time-to-collision grid abstraction around the defender. States are
// (lane slot, speed level, elapsed steps tau) plus an absorbing crash state.
// A (slot, level) cell is hazardous once tau has reached its TTC bucket.
struct MdpAbstraction {
  FiniteMdp mdp;
  std::vector<LaneId> lanes;  // slots, right to left
  int levels = 0;
  int buckets = 0;
  // ttc_bucket[slot][level]; buckets - 1 means no threat within the horizon.
  std::vector<std::vector<int>> ttc_bucket;
  int current_state = 0;
  int crash_state = 0;

  int state_index(int slot, int level, int tau) const;
  bool hazardous(int slot, int level, int tau) const;
};

MdpAbstraction abstract_mdp(const EnvState& state, const AbstractionConfig& cfg);

// Nominal model plus pessimistic (tau advances two) and optimistic (tau holds)
// time shifts of the same action effects.
UncertaintySet timing_uncertainty(const MdpAbstraction& abstraction, const AbstractionConfig& cfg);

// Speed level closest to a target speed.
int speed_level_of(double target_speed, const AbstractionConfig& cfg);

}  // namespace avstress
