#include "avstress/defender.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace avstress {

std::string_view to_string(DefenderKind kind) {
  switch (kind) {
    case DefenderKind::Vi: return "vi";
    case DefenderKind::Rvi: return "rvi";
    case DefenderKind::D3qn: return "d3qn";
    case DefenderKind::Ppo: return "ppo";
  }
  return "unknown";
}

DefenderKind defender_kind_from_string(std::string_view s) {
  for (auto k : {DefenderKind::Vi, DefenderKind::Rvi, DefenderKind::D3qn, DefenderKind::Ppo}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown defender type '" + std::string(s) + "' (expected vi, rvi, d3qn, ppo)");
}

DefenderPolicy make_dp_defender(DefenderKind kind, const AbstractionConfig& abstraction) {
  if (kind != DefenderKind::Vi && kind != DefenderKind::Rvi) {
    throw UsageError("make_dp_defender builds only vi/rvi policies");
  }
  validate(abstraction);
  DefenderPolicy p;
  p.kind = kind;
  p.abstraction = abstraction;
  return p;
}

Eigen::VectorXd dueling_q(double value, const Eigen::VectorXd& advantages) {
  return (advantages.array() - advantages.mean() + value).matrix();
}

Eigen::MatrixXd dueling_q(const Eigen::MatrixXd& raw) {
  const Eigen::Index k = raw.rows() - 1;
  if (k < 1) throw DimensionError("dueling head needs a value row and advantage rows");
  const auto adv = raw.bottomRows(k);
  Eigen::MatrixXd q = adv;
  const Eigen::RowVectorXd shift = raw.row(0) - adv.colwise().mean();
  q.rowwise() += shift;
  return q;
}

Eigen::MatrixXd dueling_backward(const Eigen::MatrixXd& grad_q) {
  const Eigen::Index k = grad_q.rows();
  Eigen::MatrixXd grad_raw(k + 1, grad_q.cols());
  grad_raw.row(0) = grad_q.colwise().sum();
  const Eigen::RowVectorXd mean = grad_q.colwise().sum() / static_cast<double>(k);
  grad_raw.bottomRows(k) = grad_q;
  grad_raw.bottomRows(k).rowwise() -= mean;
  return grad_raw;
}

SolveResult solve_abstraction(const DefenderPolicy& policy, const MdpAbstraction& abstraction) {
  const AbstractionConfig& cfg = policy.abstraction;
  switch (policy.kind) {
    case DefenderKind::Vi:
      return value_iteration(abstraction.mdp, cfg.gamma, cfg.tol);
    case DefenderKind::Rvi:
      return robust_value_iteration(abstraction.mdp, timing_uncertainty(abstraction, cfg),
                                    cfg.gamma, cfg.tol);
    default:
      throw UsageError("defender kind " + std::string(to_string(policy.kind)) +
                       " does not act on an MDP abstraction");
  }
}

Action defender_act(const DefenderPolicy& policy, const MdpAbstraction& abstraction) {
  const SolveResult solved = solve_abstraction(policy, abstraction);
  return action_from_index(argmax(Eigen::VectorXd(solved.q.row(abstraction.current_state))));
}

Action defender_act(const DefenderPolicy& policy, const Observation& obs) {
  const Eigen::VectorXd x = encode_observation(obs);
  switch (policy.kind) {
    case DefenderKind::D3qn: {
      const Eigen::VectorXd raw = forward(policy.net, x);
      return action_from_index(argmax(dueling_q(raw[0], raw.tail(raw.size() - 1))));
    }
    case DefenderKind::Ppo:
      return action_from_index(argmax(forward(policy.net, x)));
    default:
      throw UsageError("defender kind " + std::string(to_string(policy.kind)) +
                       " does not act on observations");
  }
}

Action defender_act(const DefenderPolicy& policy, const EnvState& state) {
  if (policy.kind == DefenderKind::Vi || policy.kind == DefenderKind::Rvi) {
    return defender_act(policy, abstract_mdp(state, policy.abstraction));
  }
  return defender_act(policy, observe(state, state.defender().id));
}

double defender_reward(const EnvState& next, const StepEvents& events,
                       const DefenderRewardConfig& cfg, double v_max) {
  const bool failed = events.defender_collision ||
                      next.terminal_reason == TerminalReason::DefenderOffRoad;
  return cfg.w_v * next.defender().speed / v_max - (failed ? cfg.w_c : 0.0);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  obs = Eigen::MatrixXd::Zero(kObservationDim, static_cast<Eigen::Index>(capacity));
  next_obs = Eigen::MatrixXd::Zero(kObservationDim, static_cast<Eigen::Index>(capacity));
  actions.assign(capacity, 0);
  rewards.assign(capacity, 0.0);
  dones.assign(capacity, 0);
}

void ReplayBuffer::push(const Eigen::VectorXd& o, int action, double reward,
                        const Eigen::VectorXd& next, bool done) {
  if (o.size() != kObservationDim || next.size() != kObservationDim) {
    throw DimensionError("replay observation has wrong dimension");
  }
  const auto i = static_cast<Eigen::Index>(head_);
  obs.col(i) = o;
  next_obs.col(i) = next;
  actions[head_] = action;
  rewards[head_] = reward;
  dones[head_] = done ? 1 : 0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw UsageError("cannot sample from an empty replay buffer");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = static_cast<std::size_t>(rng.below(size_));
  return out;
}

Eigen::VectorXd double_q_targets(const NetParams& online, const NetParams& target,
                                 const Eigen::MatrixXd& next_obs, const Eigen::VectorXd& rewards,
                                 const std::vector<std::uint8_t>& dones, double gamma) {
  const Eigen::MatrixXd q_online = dueling_q(forward(online, next_obs));
  const Eigen::MatrixXd q_target = dueling_q(forward(target, next_obs));
  Eigen::VectorXd y(next_obs.cols());
  for (Eigen::Index i = 0; i < next_obs.cols(); ++i) {
    const int a_star = argmax(Eigen::VectorXd(q_online.col(i)));
    const double live = dones[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
    y[i] = rewards[i] + gamma * live * q_target(a_star, i);
  }
  return y;
}

namespace {

struct EpisodeTracker {
  int episodes = 0;
  int collisions = 0;
  double return_sum = 0.0;
  double running = 0.0;

  void add(double r) { running += r; }
  void finish(const EnvState& s) {
    ++episodes;
    collisions += s.terminal_reason == TerminalReason::DefenderCollision ? 1 : 0;
    return_sum += running;
    running = 0.0;
  }
  DefenderTrainProgress report(std::int64_t steps) {
    DefenderTrainProgress p;
    p.steps = steps;
    p.episodes = episodes;
    if (episodes > 0) {
      p.mean_return = return_sum / episodes;
      p.collision_rate = static_cast<double>(collisions) / episodes;
    }
    episodes = collisions = 0;
    return_sum = 0.0;
    return p;
  }
};

void check_env(const DefenderEnv& env) {
  if (env.sim == nullptr) throw UsageError("defender environment needs a simulator");
  if (env.npcs < 0) throw ConfigError("defender training NPC count must be non-negative");
}

bool defender_failed(const StepResult& r) {
  return r.events.defender_collision ||
         r.state.terminal_reason == TerminalReason::DefenderOffRoad;
}

}  // namespace

D3qnResult train_d3qn(const DefenderEnv& env, const D3qnConfig& cfg, std::uint64_t seed,
                      const DefenderProgressFn& progress) {
  check_env(env);
  if (cfg.batch_size < 1 || cfg.total_steps < 0 || cfg.target_sync < 1 || cfg.train_every < 1 ||
      !(cfg.gamma >= 0 && cfg.gamma < 1)) {
    throw ConfigError("invalid d3qn configuration");
  }
  const Simulator& sim = *env.sim;
  const double v_max = sim.config().kinematics.v_max;

  Rng init = derive_rng(seed, "d3qn_init");
  std::vector<int> dims{kObservationDim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(kNumActions + 1);

  D3qnResult out;
  out.online = make_mlp(dims, init, 0.1);
  out.target = out.online;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.max_grad_norm = cfg.max_grad_norm;
  out.opt = make_opt_state(out.online, adam);

  Rng explore = derive_rng(seed, "d3qn_explore");
  Rng sampler = derive_rng(seed, "d3qn_replay");
  ReplayBuffer buffer(cfg.replay_capacity);
  std::uint64_t episode = 0;
  EnvState state = sim.reset({0, env.npcs}, derive_seed(seed, "d3qn_env", episode));
  Eigen::VectorXd obs = encode_observation(observe(state, state.defender().id));
  EpisodeTracker tracker;

  for (int step = 0; step < cfg.total_steps; ++step) {
    const double frac = cfg.epsilon_decay_steps > 0
                            ? std::min(1.0, static_cast<double>(step) / cfg.epsilon_decay_steps)
                            : 1.0;
    const double epsilon = cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
    int action;
    if (explore.uniform() < epsilon) {
      action = static_cast<int>(explore.below(kNumActions));
    } else {
      const Eigen::VectorXd raw = forward(out.online, obs);
      action = argmax(dueling_q(raw[0], raw.tail(kNumActions)));
    }
    const StepResult r = sim.step(state, {{state.defender().id, action_from_index(action)}});
    const double reward = defender_reward(r.state, r.events, env.reward, v_max);
    tracker.add(reward);
    const Eigen::VectorXd next_obs = encode_observation(observe(r.state, r.state.defender().id));
    buffer.push(obs, action, reward, next_obs, defender_failed(r));
    if (r.state.terminal) {
      tracker.finish(r.state);
      ++episode;
      state = sim.reset({0, env.npcs}, derive_seed(seed, "d3qn_env", episode));
      obs = encode_observation(observe(state, state.defender().id));
    } else {
      state = r.state;
      obs = next_obs;
    }

    if (step + 1 >= cfg.learning_starts && (step + 1) % cfg.train_every == 0) {
      const auto idx = buffer.sample_indices(static_cast<std::size_t>(cfg.batch_size), sampler);
      const Eigen::Index b = cfg.batch_size;
      Eigen::MatrixXd xs(kObservationDim, b), xn(kObservationDim, b);
      Eigen::VectorXd rs(b);
      std::vector<std::uint8_t> ds(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto k = static_cast<Eigen::Index>(idx[j]);
        xs.col(j) = buffer.obs.col(k);
        xn.col(j) = buffer.next_obs.col(k);
        rs[j] = buffer.rewards[idx[j]];
        ds[j] = buffer.dones[idx[j]];
      }
      const Eigen::VectorXd y = double_q_targets(out.online, out.target, xn, rs, ds, cfg.gamma);
      ForwardCache cache;
      const Eigen::MatrixXd q = dueling_q(forward(out.online, xs, &cache));
      Eigen::MatrixXd grad_q = Eigen::MatrixXd::Zero(kNumActions, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const int a = buffer.actions[idx[j]];
        const double td = q(a, j) - y[j];
        grad_q(a, j) = std::clamp(td, -cfg.huber_delta, cfg.huber_delta) / static_cast<double>(b);
      }
      opt_step(out.online, backward(out.online, cache, dueling_backward(grad_q)), out.opt);
    }
    if ((step + 1) % cfg.target_sync == 0) out.target = out.online;
    if (progress && (step + 1) % 5000 == 0) progress(tracker.report(step + 1));
  }
  out.steps = cfg.total_steps;
  out.policy.kind = DefenderKind::D3qn;
  out.policy.net = out.online;
  return out;
}

PpoDefenderResult train_ppo_defender(const DefenderEnv& env, const PpoDefenderConfig& cfg,
                                     std::uint64_t seed, const DefenderProgressFn& progress) {
  check_env(env);
  validate(cfg.ppo);
  if (cfg.envs < 1 || cfg.rollout_len < 1 || cfg.total_steps < 0) {
    throw ConfigError("invalid ppo defender configuration");
  }
  const Simulator& sim = *env.sim;
  const double v_max = sim.config().kinematics.v_max;

  Rng init = derive_rng(seed, "ppo_defender_init");
  std::vector<int> dims{kObservationDim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  std::vector<int> actor_dims = dims, critic_dims = dims;
  actor_dims.push_back(kNumActions);
  critic_dims.push_back(1);

  PpoDefenderResult out;
  out.actor = make_mlp(actor_dims, init, 0.01);
  out.critic = make_mlp(critic_dims, init, 1.0);
  AdamConfig actor_adam{cfg.ppo.actor_lr}, critic_adam{cfg.ppo.critic_lr};
  actor_adam.max_grad_norm = critic_adam.max_grad_norm = cfg.ppo.max_grad_norm;
  out.actor_opt = make_opt_state(out.actor, actor_adam);
  out.critic_opt = make_opt_state(out.critic, critic_adam);

  Rng sampler = derive_rng(seed, "ppo_defender_sample");
  Rng shuffler = derive_rng(seed, "ppo_defender_shuffle");
  std::vector<EnvState> states;
  std::vector<std::uint64_t> episode_counter(static_cast<std::size_t>(cfg.envs), 0);
  for (int e = 0; e < cfg.envs; ++e) {
    states.push_back(sim.reset({0, env.npcs}, derive_seed(seed, "ppo_defender_env",
                                                         static_cast<std::uint64_t>(e) << 32)));
  }
  EpisodeTracker summary;

  std::int64_t steps = 0;
  while (steps < cfg.total_steps) {
    RolloutBatch batch;
    batch.resize(cfg.envs, cfg.rollout_len);
    for (int t = 0; t < cfg.rollout_len; ++t) {
      Eigen::MatrixXd obs(kObservationDim, cfg.envs);
      for (int e = 0; e < cfg.envs; ++e) {
        obs.col(e) = encode_observation(observe(states[e], states[e].defender().id));
      }
      const Eigen::MatrixXd logits = forward(out.actor, obs);
      const Eigen::MatrixXd values = forward(out.critic, obs);
      for (int e = 0; e < cfg.envs; ++e) {
        const std::size_t i = static_cast<std::size_t>(e) * cfg.rollout_len + t;
        const CategoricalSample s = categorical_sample(Eigen::VectorXd(logits.col(e)), sampler);
        const StepResult r = sim.step(states[e], {{states[e].defender().id, action_from_index(s.index)}});
        const double reward = defender_reward(r.state, r.events, env.reward, v_max);
        batch.obs.col(static_cast<Eigen::Index>(i)) = obs.col(e);
        batch.actions[i] = s.index;
        batch.log_probs[i] = s.log_prob;
        batch.values[i] = values(0, e);
        batch.rewards[i] = reward;
        batch.dones[i] = r.state.terminal ? 1 : 0;
        summary.add(reward);
        if (r.state.terminal) {
          summary.finish(r.state);
          auto& n = episode_counter[static_cast<std::size_t>(e)];
          ++n;
          states[e] = sim.reset({0, env.npcs},
                                derive_seed(seed, "ppo_defender_env",
                                            (static_cast<std::uint64_t>(e) << 32) | n));
        } else {
          states[e] = r.state;
        }
      }
      steps += cfg.envs;
    }
    Eigen::MatrixXd last(kObservationDim, cfg.envs);
    for (int e = 0; e < cfg.envs; ++e) {
      last.col(e) = encode_observation(observe(states[e], states[e].defender().id));
    }
    const Eigen::MatrixXd boot = forward(out.critic, last);
    for (int e = 0; e < cfg.envs; ++e) batch.bootstrap_values[e] = boot(0, e);
    compute_batch_gae(batch, cfg.ppo.gamma, cfg.ppo.gae_lambda);
    mappo_update(batch, out.actor, out.critic, out.actor_opt, out.critic_opt, cfg.ppo, shuffler);
    if (progress) progress(summary.report(steps));
  }
  out.steps = steps;
  out.policy.kind = DefenderKind::Ppo;
  out.policy.net = out.actor;
  return out;
}

}  // namespace avstress
