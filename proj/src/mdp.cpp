#include "avstress/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace avstress {

namespace {

void check_row(const TransitionRow& row, int num_states, const std::string& where) {
  if (row.empty()) throw ConfigError(where + ": empty transition row");
  double sum = 0.0;
  for (const Transition& t : row) {
    if (t.next < 0 || t.next >= num_states) throw ConfigError(where + ": next state out of range");
    if (!(t.prob >= 0.0) || !std::isfinite(t.prob)) {
      throw ConfigError(where + ": invalid probability");
    }
    sum += t.prob;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError(where + ": probabilities sum to " + std::to_string(sum));
  }
}

void check_solver_args(double gamma, double tol) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
}

template <typename Backup>
SolveResult iterate(const FiniteMdp& mdp, double gamma, double tol, int max_sweeps, Backup backup) {
  SolveResult out;
  out.q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  Eigen::MatrixXd next(mdp.num_states, mdp.num_actions);
  Eigen::VectorXd v(mdp.num_states);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    v = out.q.rowwise().maxCoeff();
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        next(s, a) = mdp.reward(s, a) + gamma * backup(s, a, v);
      }
    }
    const double residual = (next - out.q).cwiseAbs().maxCoeff();
    out.q.swap(next);
    out.residuals.push_back(residual);
    out.sweeps = sweep + 1;
    if (residual < tol) return out;
  }
  throw NumericError("value iteration did not converge within " + std::to_string(max_sweeps) +
                     " sweeps");
}

double expectation(const TransitionRow& row, const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (const Transition& t : row) acc += t.prob * v[t.next];
  return acc;
}

}  // namespace

void FiniteMdp::validate() const {
  if (num_states <= 0 || num_actions <= 0) throw ConfigError("MDP must have states and actions");
  if (static_cast<int>(transitions.size()) != num_states || reward.rows() != num_states ||
      reward.cols() != num_actions) {
    throw ConfigError("MDP tables do not match state/action counts");
  }
  if (!reward.allFinite()) throw ConfigError("MDP rewards must be finite");
  for (int s = 0; s < num_states; ++s) {
    if (static_cast<int>(transitions[s].size()) != num_actions) {
      throw ConfigError("MDP state " + std::to_string(s) + " lacks actions");
    }
    for (int a = 0; a < num_actions; ++a) {
      check_row(transitions[s][a], num_states,
                "transition (" + std::to_string(s) + ", " + std::to_string(a) + ")");
    }
  }
}

UncertaintySet UncertaintySet::nominal_only(const FiniteMdp& mdp) {
  UncertaintySet u;
  u.models.resize(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) {
    u.models[s].resize(mdp.num_actions);
    for (int a = 0; a < mdp.num_actions; ++a) u.models[s][a] = {mdp.transitions[s][a]};
  }
  return u;
}

void UncertaintySet::validate(const FiniteMdp& mdp) const {
  if (static_cast<int>(models.size()) != mdp.num_states) {
    throw ConfigError("uncertainty set does not cover every state");
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    if (static_cast<int>(models[s].size()) != mdp.num_actions) {
      throw ConfigError("uncertainty set does not cover every action");
    }
    for (int a = 0; a < mdp.num_actions; ++a) {
      if (models[s][a].empty()) throw ConfigError("uncertainty set entry is empty");
      for (const TransitionRow& row : models[s][a]) {
        check_row(row, mdp.num_states,
                  "uncertainty model (" + std::to_string(s) + ", " + std::to_string(a) + ")");
      }
    }
  }
}

SolveResult value_iteration(const FiniteMdp& mdp, double gamma, double tol, int max_sweeps) {
  check_solver_args(gamma, tol);
  mdp.validate();
  return iterate(mdp, gamma, tol, max_sweeps, [&](int s, int a, const Eigen::VectorXd& v) {
    return expectation(mdp.transitions[s][a], v);
  });
}

SolveResult robust_value_iteration(const FiniteMdp& mdp, const UncertaintySet& uncertainty,
                                   double gamma, double tol, int max_sweeps) {
  check_solver_args(gamma, tol);
  mdp.validate();
  uncertainty.validate(mdp);
  return iterate(mdp, gamma, tol, max_sweeps, [&](int s, int a, const Eigen::VectorXd& v) {
    double worst = std::numeric_limits<double>::infinity();
    for (const TransitionRow& row : uncertainty.models[s][a]) {
      worst = std::min(worst, expectation(row, v));
    }
    return worst;
  });
}

AbstractionConfig default_abstraction(ScenarioKind kind) {
  AbstractionConfig cfg;
  if (kind == ScenarioKind::Roundabout) cfg.speed_levels = {5.0, 10.0, 15.0};
  return cfg;
}

void validate(const AbstractionConfig& cfg) {
  if (cfg.speed_levels.empty()) throw ConfigError("abstraction.speed_levels must not be empty");
  for (std::size_t i = 0; i < cfg.speed_levels.size(); ++i) {
    if (!(cfg.speed_levels[i] >= 0.0) || (i > 0 && cfg.speed_levels[i] <= cfg.speed_levels[i - 1])) {
      throw ConfigError("abstraction.speed_levels must be non-negative and ascending");
    }
  }
  if (cfg.ttc_buckets < 2) throw ConfigError("abstraction.ttc_buckets must be >= 2");
  if (!(cfg.ttc_horizon > 0.0)) throw ConfigError("abstraction.ttc_horizon must be positive");
  if (!(cfg.w_v >= 0.0 && cfg.w_c >= 0.0)) throw ConfigError("abstraction weights must be >= 0");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw ConfigError("abstraction.gamma must lie in [0, 1)");
  if (!(cfg.tol > 0.0)) throw ConfigError("abstraction.tol must be positive");
}

int speed_level_of(double target_speed, const AbstractionConfig& cfg) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(cfg.speed_levels.size()); ++i) {
    if (std::abs(cfg.speed_levels[i] - target_speed) <
        std::abs(cfg.speed_levels[best] - target_speed)) {
      best = i;
    }
  }
  return best;
}

int MdpAbstraction::state_index(int slot, int level, int tau) const {
  return (slot * levels + level) * buckets + tau;
}

bool MdpAbstraction::hazardous(int slot, int level, int tau) const {
  const int b = ttc_bucket[slot][level];
  return b < buckets - 1 && b <= tau;
}

namespace {

struct Effect {
  int slot;
  int level;
};

Effect action_effect(Action a, int slot, int level, int slots, int levels) {
  switch (a) {
    case Action::Idle: break;
    case Action::Faster: level = std::min(level + 1, levels - 1); break;
    case Action::Slower: level = std::max(level - 1, 0); break;
    case Action::LaneLeft: slot = std::min(slot + 1, slots - 1); break;
    case Action::LaneRight: slot = std::max(slot - 1, 0); break;
  }
  return {slot, level};
}

int successor(const MdpAbstraction& m, Effect e, int tau, int advance) {
  const int t = std::min(tau + advance, m.buckets - 1);
  return m.hazardous(e.slot, e.level, t) ? m.crash_state : m.state_index(e.slot, e.level, t);
}

}  // namespace

MdpAbstraction abstract_mdp(const EnvState& state, const AbstractionConfig& cfg) {
  validate(cfg);
  const Vehicle& ego = state.defender();
  const RoadNetwork& road = *state.road;
  MdpAbstraction m;
  m.lanes = road.lateral_group(ego.target_lane);
  m.levels = static_cast<int>(cfg.speed_levels.size());
  m.buckets = cfg.ttc_buckets;
  const int slots = static_cast<int>(m.lanes.size());
  const double bucket_width = cfg.ttc_horizon / cfg.ttc_buckets;

  m.ttc_bucket.assign(slots, std::vector<int>(m.levels, m.buckets - 1));
  int ego_slot = 0;
  for (int j = 0; j < slots; ++j) {
    const LaneId lane = m.lanes[j];
    if (lane == ego.target_lane) ego_slot = j;
    const double s_ref = lane == ego.lane ? ego.s : road.lane(lane).project(ego.position).s;
    const auto leader = find_leader(state, lane, s_ref, ego.length, ego.id);
    if (!leader) continue;
    for (int l = 0; l < m.levels; ++l) {
      int bucket = m.buckets - 1;
      if (leader->gap <= 0.0) {
        bucket = 0;
      } else {
        const double closing = cfg.speed_levels[l] - leader->speed;
        if (closing > 0.0) {
          const double ttc = leader->gap / closing;
          bucket = static_cast<int>(std::min<double>(m.buckets - 1, std::floor(ttc / bucket_width)));
        }
      }
      m.ttc_bucket[j][l] = bucket;
    }
  }

  const int n = slots * m.levels * m.buckets + 1;
  m.crash_state = n - 1;
  m.mdp.num_states = n;
  m.mdp.num_actions = kNumActions;
  m.mdp.transitions.assign(n, std::vector<TransitionRow>(kNumActions));
  m.mdp.reward = Eigen::MatrixXd::Zero(n, kNumActions);
  const double level_scale = m.levels > 1 ? 1.0 / (m.levels - 1) : 0.0;
  for (int j = 0; j < slots; ++j) {
    for (int l = 0; l < m.levels; ++l) {
      for (int tau = 0; tau < m.buckets; ++tau) {
        const int s = m.state_index(j, l, tau);
        for (Action a : kAllActions) {
          const Effect e = action_effect(a, j, l, slots, m.levels);
          const int next = successor(m, e, tau, 1);
          m.mdp.transitions[s][to_index(a)] = {{next, 1.0}};
          m.mdp.reward(s, to_index(a)) =
              next == m.crash_state ? -cfg.w_c : cfg.w_v * e.level * level_scale;
        }
      }
    }
  }
  for (Action a : kAllActions) m.mdp.transitions[m.crash_state][to_index(a)] = {{m.crash_state, 1.0}};
  m.current_state = m.state_index(ego_slot, speed_level_of(ego.target_speed, cfg), 0);
  return m;
}

UncertaintySet timing_uncertainty(const MdpAbstraction& m, const AbstractionConfig& cfg) {
  (void)cfg;
  UncertaintySet u = UncertaintySet::nominal_only(m.mdp);
  const int slots = static_cast<int>(m.lanes.size());
  for (int j = 0; j < slots; ++j) {
    for (int l = 0; l < m.levels; ++l) {
      for (int tau = 0; tau < m.buckets; ++tau) {
        const int s = m.state_index(j, l, tau);
        for (Action a : kAllActions) {
          const Effect e = action_effect(a, j, l, slots, m.levels);
          auto& set = u.models[s][to_index(a)];
          set.push_back({{successor(m, e, tau, 2), 1.0}});
          set.push_back({{successor(m, e, tau, 0), 1.0}});
        }
      }
    }
  }
  return u;
}

}  // namespace avstress
