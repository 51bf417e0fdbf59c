#include "avstress/marl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace avstress {

std::string_view to_string(RewardMode mode) {
  return mode == RewardMode::Har ? "har" : "collision_only";
}

RewardMode reward_mode_from_string(std::string_view s) {
  if (s == "har") return RewardMode::Har;
  if (s == "collision_only") return RewardMode::CollisionOnly;
  throw ConfigError("unknown reward mode '" + std::string(s) + "'");
}

void validate(const HarConfig& cfg) {
  if (!(cfg.phi > 0.0) || !std::isfinite(cfg.phi)) throw ConfigError("har.phi must be > 0");
  if (!(cfg.rho < 0.0) || !std::isfinite(cfg.rho)) throw ConfigError("har.rho must be < 0");
  if (!(cfg.lambda_accel > 0.0) || !std::isfinite(cfg.lambda_accel)) {
    throw ConfigError("har.lambda_accel must be > 0");
  }
}

ShapingConfig default_shaping(ScenarioKind kind) {
  ShapingConfig cfg;
  if (kind == ScenarioKind::Roundabout) cfg.w_d = 0.04;
  return cfg;
}

void validate(const ShapingConfig& cfg) {
  if (!(cfg.w_d >= 0.0) || !std::isfinite(cfg.w_d)) throw ConfigError("shaping.w_d must be >= 0");
  if (!(cfg.d_max > 0.0) || !std::isfinite(cfg.d_max)) throw ConfigError("shaping.d_max must be > 0");
}

bool is_aggressive(Action action, double accel, double lambda_accel) {
  return action == Action::LaneLeft || action == Action::LaneRight ||
         std::abs(accel) > lambda_accel;
}

double har_reward(const StepEvents& events, Action action, double accel, const HarConfig& cfg) {
  const double r_c = events.defender_collision ? cfg.phi : 0.0;
  if (cfg.mode == RewardMode::CollisionOnly) return r_c;
  const double p_agg = is_aggressive(action, accel, cfg.lambda_accel) ? cfg.rho : 0.0;
  return r_c + p_agg;
}

double distance_reward(const EnvState& state, VehicleId attacker, const ShapingConfig& cfg) {
  const Vehicle& a = state.vehicle(attacker);
  const Vec2 delta = a.position - state.defender().position;
  const double dist = std::hypot(delta.x, delta.y);
  return cfg.w_d * std::max(0.0, 1.0 - dist / cfg.d_max);
}

RewardComponents attacker_reward_components(const StepEvents& events, Action action, double accel,
                                            const EnvState& next, VehicleId attacker,
                                            const HarConfig& har, const ShapingConfig& shaping,
                                            bool active) {
  RewardComponents r;
  if (!active) return r;
  r.r_c = events.defender_collision ? har.phi : 0.0;
  if (har.mode == RewardMode::Har && is_aggressive(action, accel, har.lambda_accel)) {
    r.p_agg = har.rho;
  }
  // A crashed or departed attacker cannot pursue anything, so proximity stops paying.
  if (next.vehicle(attacker).active()) r.r_d = distance_reward(next, attacker, shaping);
  return r;
}

double attacker_reward(const StepEvents& events, Action action, double accel,
                       const EnvState& next, VehicleId attacker, const HarConfig& har,
                       const ShapingConfig& shaping) {
  return attacker_reward_components(events, action, accel, next, attacker, har, shaping).total();
}

void EpisodeStats::merge(const EpisodeStats& o) {
  episodes += o.episodes;
  defender_collisions += o.defender_collisions;
  defender_off_road += o.defender_off_road;
  route_completed += o.route_completed;
  har_sum += o.har_sum;
  attacker_steps += o.attacker_steps;
  aggressive_steps += o.aggressive_steps;
}

namespace {

void check_env(const AttackEnv& env) {
  if (!env.sim) throw UsageError("attack environment has no simulator");
  if (env.counts.attackers < 1 || env.counts.attackers > 3) {
    throw ConfigError("n_attackers must be in [1, 3]");
  }
  if (env.counts.npcs < 0) throw ConfigError("n_npcs must be >= 0");
  validate(env.har);
  validate(env.shaping);
}

void finish_episode(EpisodeStats& stats, const EnvState& s, double har_total) {
  ++stats.episodes;
  if (s.terminal_reason == TerminalReason::DefenderCollision) ++stats.defender_collisions;
  if (s.terminal_reason == TerminalReason::DefenderOffRoad) ++stats.defender_off_road;
  if (s.terminal_reason == TerminalReason::RouteCompleted) ++stats.route_completed;
  stats.har_sum += har_total;
}

struct StepOutcome {
  StepResult result;
  std::map<VehicleId, RewardComponents> rewards;
  std::map<VehicleId, double> accel;
  std::int64_t active_attackers = 0;
  std::int64_t aggressive = 0;
  double har = 0.0;
};

StepOutcome step_env(const AttackEnv& env, const DefenderPolicy& defender, const EnvState& state,
                     JointActions& actions) {
  actions[state.defender().id] = defender_act(defender, state);
  StepOutcome out;
  out.result = env.sim->step(state, actions);
  const double period = env.sim->policy_period();
  for (VehicleId id : state.ids_with_role(Role::Attacker)) {
    const Vehicle& before = state.vehicle(id);
    const bool active = before.active();
    const Vehicle& after = out.result.state.vehicle(id);
    const double accel = active ? (after.speed - before.speed) / period : 0.0;
    const Action a = actions.count(id) ? actions.at(id) : Action::Idle;
    const RewardComponents r = attacker_reward_components(
        out.result.events, a, accel, out.result.state, id, env.har, env.shaping, active);
    out.rewards[id] = r;
    out.accel[id] = accel;
    out.har += r.har();
    if (active) {
      ++out.active_attackers;
      if (is_aggressive(a, accel, env.har.lambda_accel)) ++out.aggressive;
    }
  }
  return out;
}

}  // namespace

JointActions attacker_actions(const EnvState& state, AttackerControl control,
                              const NetParams* actor, Rng& rng, std::vector<double>* log_probs) {
  const std::vector<VehicleId> ids = state.ids_with_role(Role::Attacker);
  if ((control == AttackerControl::Sample || control == AttackerControl::Greedy) && !actor) {
    throw UsageError("attacker control requires an actor network");
  }
  JointActions out;
  if (log_probs) log_probs->assign(ids.size(), 0.0);
  if (ids.empty()) return out;
  Eigen::MatrixXd logits;
  if (actor) {
    Eigen::MatrixXd obs(kObservationDim, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      obs.col(static_cast<Eigen::Index>(k)) = encode_observation(observe(state, ids[k]));
    }
    logits = forward(*actor, obs);
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    // Every slot draws, active or not, so the stream does not depend on crashes.
    int index = 0;
    switch (control) {
      case AttackerControl::Sample: {
        const CategoricalSample s = categorical_sample(Eigen::VectorXd(logits.col(col)), rng);
        index = s.index;
        if (log_probs) (*log_probs)[k] = s.log_prob;
        break;
      }
      case AttackerControl::Greedy: index = argmax(Eigen::VectorXd(logits.col(col))); break;
      case AttackerControl::Random: index = static_cast<int>(rng.below(kNumActions)); break;
      case AttackerControl::Idle: index = 0; break;
    }
    out[ids[k]] = action_from_index(index);
  }
  return out;
}

EpisodeRecord run_episode(const AttackEnv& env, const DefenderPolicy& defender,
                          AttackerControl control, const NetParams* actor,
                          std::uint64_t reset_seed, Rng& rng, EpisodeStats* stats) {
  if (!env.sim) throw UsageError("attack environment has no simulator");
  EpisodeRecord rec;
  rec.reset_seed = reset_seed;
  rec.counts = env.counts;
  rec.initial = env.sim->reset(env.counts, reset_seed);
  EnvState state = rec.initial;
  double har_total = 0.0;
  while (!state.terminal) {
    JointActions actions = attacker_actions(state, control, actor, rng);
    StepOutcome o = step_env(env, defender, state, actions);
    har_total += o.har;
    if (stats) {
      stats->attacker_steps += o.active_attackers;
      stats->aggressive_steps += o.aggressive;
    }
    StepRecord step;
    step.actions = std::move(actions);
    step.rewards = std::move(o.rewards);
    step.accel = std::move(o.accel);
    step.events = std::move(o.result.events);
    step.state = o.result.state;
    rec.steps.push_back(std::move(step));
    state = std::move(o.result.state);
  }
  if (stats) finish_episode(*stats, state, har_total);
  return rec;
}

RolloutCollector::RolloutCollector(AttackEnv env, int num_envs, std::uint64_t seed)
    : env_(env), num_envs_(num_envs), seed_(seed) {
  check_env(env_);
  if (num_envs_ < 1) throw ConfigError("at least one environment is required");
  episodes_.assign(static_cast<std::size_t>(num_envs_), 0);
  har_running_.assign(static_cast<std::size_t>(num_envs_), 0.0);
  for (int e = 0; e < num_envs_; ++e) states_.push_back(fresh(e));
}

EnvState RolloutCollector::fresh(int e) {
  const std::uint64_t index =
      (static_cast<std::uint64_t>(e) << 32) | episodes_[static_cast<std::size_t>(e)];
  return env_.sim->reset(env_.counts, derive_seed(seed_, "attack_env", index));
}

RolloutBatch RolloutCollector::collect(const NetParams& actor, const NetParams& critic,
                                       const DefenderPolicy& defender, int T, Rng& rng) {
  if (T < 1) throw ConfigError("rollout length must be >= 1");
  const int n_att = env_.counts.attackers;
  fingerprint_ = params_fingerprint(actor);
  RolloutBatch batch;
  batch.resize(streams(), T);
  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < num_envs_; ++e) {
      EnvState& state = states_[static_cast<std::size_t>(e)];
      const std::vector<VehicleId> ids = state.ids_with_role(Role::Attacker);
      if (static_cast<int>(ids.size()) != n_att) {
        throw InitializationError("environment has an unexpected attacker count");
      }
      Eigen::MatrixXd obs(kObservationDim, n_att);
      for (int k = 0; k < n_att; ++k) obs.col(k) = encode_observation(observe(state, ids[k]));
      const Eigen::MatrixXd logits = forward(actor, obs);
      const Eigen::MatrixXd values = forward(critic, obs);

      JointActions actions;
      std::vector<int> chosen(static_cast<std::size_t>(n_att));
      std::vector<double> lps(static_cast<std::size_t>(n_att));
      for (int k = 0; k < n_att; ++k) {
        const CategoricalSample s = categorical_sample(Eigen::VectorXd(logits.col(k)), rng);
        chosen[k] = s.index;
        lps[k] = s.log_prob;
        actions[ids[k]] = action_from_index(s.index);
      }
      std::vector<bool> was_active(static_cast<std::size_t>(n_att));
      for (int k = 0; k < n_att; ++k) was_active[k] = state.vehicle(ids[k]).active();

      StepOutcome o = step_env(env_, defender, state, actions);
      stats_.attacker_steps += o.active_attackers;
      stats_.aggressive_steps += o.aggressive;
      har_running_[static_cast<std::size_t>(e)] += o.har;
      const bool done = o.result.state.terminal;
      for (int k = 0; k < n_att; ++k) {
        const std::size_t i = static_cast<std::size_t>(e * n_att + k) * T + t;
        batch.obs.col(static_cast<Eigen::Index>(i)) = obs.col(k);
        batch.actions[i] = chosen[k];
        batch.log_probs[i] = lps[k];
        batch.values[i] = values(0, k);
        batch.rewards[i] = o.rewards.at(ids[k]).total();
        batch.dones[i] = done ? 1 : 0;
        batch.valid[i] = was_active[k] ? 1 : 0;
      }
      if (done) {
        finish_episode(stats_, o.result.state, har_running_[static_cast<std::size_t>(e)]);
        har_running_[static_cast<std::size_t>(e)] = 0.0;
        ++episodes_[static_cast<std::size_t>(e)];
        state = fresh(e);
      } else {
        state = std::move(o.result.state);
      }
    }
  }
  for (int e = 0; e < num_envs_; ++e) {
    const EnvState& state = states_[static_cast<std::size_t>(e)];
    const std::vector<VehicleId> ids = state.ids_with_role(Role::Attacker);
    Eigen::MatrixXd obs(kObservationDim, n_att);
    for (int k = 0; k < n_att; ++k) obs.col(k) = encode_observation(observe(state, ids[k]));
    const Eigen::MatrixXd boot = forward(critic, obs);
    for (int k = 0; k < n_att; ++k) batch.bootstrap_values[e * n_att + k] = boot(0, k);
  }
  batch.check_shapes();
  return batch;
}

void validate(const AttackTrainConfig& cfg) {
  validate(cfg.ppo);
  if (cfg.envs < 1) throw ConfigError("train.envs must be >= 1");
  if (cfg.rollout_len < 1) throw ConfigError("train.rollout_len must be >= 1");
  if (cfg.total_steps < 0) throw ConfigError("train.total_steps must be >= 0");
  for (int h : cfg.hidden) {
    if (h < 1) throw ConfigError("train.hidden sizes must be >= 1");
  }
}

AttackerState init_attackers(const AttackTrainConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng init = derive_rng(seed, "attacker_init");
  std::vector<int> dims{kObservationDim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  std::vector<int> actor_dims = dims, critic_dims = dims;
  actor_dims.push_back(kNumActions);
  critic_dims.push_back(1);
  AttackerState s;
  s.actor = make_mlp(actor_dims, init, 0.01);
  s.critic = make_mlp(critic_dims, init, 1.0);
  AdamConfig actor_adam{cfg.ppo.actor_lr}, critic_adam{cfg.ppo.critic_lr};
  actor_adam.max_grad_norm = critic_adam.max_grad_norm = cfg.ppo.max_grad_norm;
  s.actor_opt = make_opt_state(s.actor, actor_adam);
  s.critic_opt = make_opt_state(s.critic, critic_adam);
  return s;
}

AttackerTrainer::AttackerTrainer(AttackEnv env, DefenderPolicy defender, AttackTrainConfig cfg,
                                 std::uint64_t seed, AttackerState state)
    : env_(env),
      defender_(std::move(defender)),
      cfg_(std::move(cfg)),
      seed_(seed),
      state_(std::move(state)),
      // Environments restart from iteration-specific seeds so a resumed run
      // does not replay episodes already seen.
      collector_(env, cfg_.envs,
                 derive_seed(seed, "attack_collector", static_cast<std::uint64_t>(state_.iteration))) {
  validate(cfg_);
}

IterationReport AttackerTrainer::iterate() {
  const auto it = static_cast<std::uint64_t>(state_.iteration);
  Rng sampler = derive_rng(seed_, "attack_sample", it);
  Rng shuffler = derive_rng(seed_, "attack_update", it);
  collector_.clear_stats();
  RolloutBatch batch = collector_.collect(state_.actor, state_.critic, defender_, cfg_.rollout_len, sampler);
  compute_batch_gae(batch, cfg_.ppo.gamma, cfg_.ppo.gae_lambda);
  IterationReport report;
  try {
    report.update = mappo_update(batch, state_.actor, state_.critic, state_.actor_opt,
                                 state_.critic_opt, cfg_.ppo, shuffler);
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(state_.iteration) + ": " + e.what());
  }
  state_.env_steps += static_cast<std::int64_t>(cfg_.envs) * cfg_.rollout_len;
  report.iteration = state_.iteration;
  report.env_steps = state_.env_steps;
  report.window = collector_.stats();
  ++state_.iteration;
  return report;
}

}  // namespace avstress
