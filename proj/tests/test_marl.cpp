#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "avstress/marl.hpp"

using namespace avstress;

namespace {

Simulator make_sim(ScenarioKind kind) {
  return Simulator(std::make_shared<const RoadNetwork>(build_scenario(kind)), default_sim_config(kind));
}

StepEvents events_with(bool defender_collision) {
  StepEvents ev;
  ev.defender_collision = defender_collision;
  return ev;
}

AttackTrainConfig tiny_train() {
  AttackTrainConfig cfg;
  cfg.hidden = {16, 16};
  cfg.envs = 2;
  cfg.rollout_len = 8;
  cfg.ppo.epochs = 2;
  cfg.ppo.minibatches = 2;
  cfg.total_steps = 32;
  return cfg;
}

}  // namespace

TEST(HarReward, DocumentedValues) {
  const HarConfig cfg;
  EXPECT_DOUBLE_EQ(har_reward(events_with(true), Action::Idle, 0.0, cfg), 10.0);
  EXPECT_DOUBLE_EQ(har_reward(events_with(false), Action::LaneLeft, 0.0, cfg), -10.5);
  EXPECT_DOUBLE_EQ(har_reward(events_with(false), Action::Idle, 3.5, cfg), 0.0);
  EXPECT_DOUBLE_EQ(har_reward(events_with(true), Action::LaneRight, 0.0, cfg), -0.5);
  EXPECT_DOUBLE_EQ(har_reward(events_with(false), Action::Slower, -3.6, cfg), -10.5);
}

TEST(HarReward, GridOutputsOnlyFourValues) {
  const HarConfig cfg;
  const std::set<double> allowed{0.0, 10.0, -10.5, -0.5};
  std::set<double> seen;
  for (bool collided : {false, true}) {
    for (Action a : kAllActions) {
      for (double accel : {0.0, 3.5, -3.5, 3.51, -7.0}) {
        const double r = har_reward(events_with(collided), a, accel, cfg);
        EXPECT_TRUE(allowed.count(r)) << r;
        seen.insert(r);
        const double expected = (collided ? 10.0 : 0.0) +
                                ((a == Action::LaneLeft || a == Action::LaneRight ||
                                  std::abs(accel) > 3.5)
                                     ? -10.5
                                     : 0.0);
        EXPECT_EQ(r, expected);
      }
    }
  }
  EXPECT_EQ(seen, allowed);
}

TEST(HarReward, CollisionOnlyDropsPenalty) {
  HarConfig cfg;
  cfg.mode = RewardMode::CollisionOnly;
  EXPECT_DOUBLE_EQ(har_reward(events_with(false), Action::LaneLeft, 9.0, cfg), 0.0);
  EXPECT_DOUBLE_EQ(har_reward(events_with(true), Action::LaneLeft, 9.0, cfg), 10.0);
}

TEST(HarReward, ConfigValidation) {
  HarConfig cfg;
  cfg.rho = 1.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.lambda_accel = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  EXPECT_EQ(reward_mode_from_string("collision_only"), RewardMode::CollisionOnly);
  EXPECT_THROW(reward_mode_from_string("other"), ConfigError);
}

TEST(DistanceReward, LinearProfile) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  EnvState s = sim.reset({1, 0}, 3);
  const VehicleId att = s.ids_with_role(Role::Attacker).front();
  const ShapingConfig cfg;
  Vehicle& a = s.vehicle(att);
  const Vec2 p = s.defender().position;
  a.position = p;
  EXPECT_DOUBLE_EQ(distance_reward(s, att, cfg), 0.05);
  a.position = {p.x + 30.0, p.y};
  EXPECT_NEAR(distance_reward(s, att, cfg), 0.025, 1e-15);
  a.position = {p.x, p.y + 60.0};
  EXPECT_DOUBLE_EQ(distance_reward(s, att, cfg), 0.0);
  a.position = {p.x + 100.0, p.y};
  EXPECT_DOUBLE_EQ(distance_reward(s, att, cfg), 0.0);
}

TEST(DistanceReward, EpisodeTotalStaysBelowHalfPhi) {
  const HarConfig har;
  for (ScenarioKind kind : {ScenarioKind::Highway, ScenarioKind::Merge, ScenarioKind::Roundabout}) {
    const ShapingConfig shaping = default_shaping(kind);
    const int horizon = default_sim_config(kind).kinematics.horizon;
    EXPECT_LT(shaping.w_d * horizon, har.phi / 2) << to_string(kind);
  }
}

TEST(AttackerReward, ComposesHarAndShaping) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  EnvState s = sim.reset({1, 0}, 3);
  const VehicleId att = s.ids_with_role(Role::Attacker).front();
  s.vehicle(att).position = s.defender().position;
  const HarConfig har;
  const ShapingConfig shaping;
  EXPECT_DOUBLE_EQ(attacker_reward(events_with(true), Action::Idle, 0.0, s, att, har, shaping),
                   10.0 + 0.05);
  s.vehicle(att).position = {s.defender().position.x + 500.0, s.defender().position.y};
  EXPECT_DOUBLE_EQ(attacker_reward(events_with(false), Action::Idle, 0.0, s, att, har, shaping), 0.0);
  const RewardComponents inactive = attacker_reward_components(
      events_with(true), Action::LaneLeft, 9.0, s, att, har, shaping, false);
  EXPECT_EQ(inactive.total(), 0.0);
}

TEST(Rollout, ShapeDoneAlignmentAndMasking) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  const AttackEnv env{&sim, {2, 4}, {}, {}};
  const AttackerState st = init_attackers(tiny_train(), 1);
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, default_abstraction(ScenarioKind::Highway));
  RolloutCollector collector(env, 4, 11);
  Rng rng(5);
  const RolloutBatch b = collector.collect(st.actor, st.critic, def, 8, rng);
  EXPECT_EQ(b.size(), 64u);
  EXPECT_EQ(b.streams, 8);
  EXPECT_EQ(b.steps, 8);
  EXPECT_EQ(collector.last_policy_fingerprint(), params_fingerprint(st.actor));

  // Long rollout: every terminal surfaces as a done on all streams of its env.
  RolloutCollector longer(env, 2, 12);
  const RolloutBatch c = longer.collect(st.actor, st.critic, def, 200, rng);
  int dones = 0;
  for (int e = 0; e < 2; ++e) {
    for (int t = 0; t < 200; ++t) {
      const std::size_t i0 = static_cast<std::size_t>(e * 2) * 200 + t;
      const std::size_t i1 = static_cast<std::size_t>(e * 2 + 1) * 200 + t;
      EXPECT_EQ(c.dones[i0], c.dones[i1]);
      dones += c.dones[i0];
      // The first step of an episode always has every attacker active.
      if (t == 0 || c.dones[i0 - 1]) {
        EXPECT_EQ(c.valid[i0], 1);
        EXPECT_EQ(c.valid[i1], 1);
      }
      if (!c.valid[i0]) EXPECT_EQ(c.rewards[i0], 0.0);
    }
  }
  EXPECT_GE(dones, 2);  // horizon 80 forces at least two episodes per env
  EXPECT_EQ(dones, longer.stats().episodes);
}

TEST(Rollout, DoneMatchesIndependentReplay) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  const AttackEnv env{&sim, {1, 4}, {}, {}};
  const AttackerState st = init_attackers(tiny_train(), 2);
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, default_abstraction(ScenarioKind::Highway));
  RolloutCollector collector(env, 1, 21);
  Rng rng(9);
  const RolloutBatch b = collector.collect(st.actor, st.critic, def, 120, rng);

  // Re-run the single stream by hand from the same reset seed and actions.
  EnvState s = sim.reset(env.counts, derive_seed(21, "attack_env", 0));
  std::uint64_t episode = 0;
  for (int t = 0; t < 120; ++t) {
    const VehicleId att = s.ids_with_role(Role::Attacker).front();
    EXPECT_TRUE(encode_observation(observe(s, att)).isApprox(b.obs.col(t), 0.0));
    JointActions acts;
    acts[att] = action_from_index(b.actions[t]);
    acts[s.defender().id] = defender_act(def, s);
    const StepResult r = sim.step(s, acts);
    ASSERT_EQ(b.dones[t], r.state.terminal ? 1 : 0) << "step " << t;
    s = r.state.terminal ? sim.reset(env.counts, derive_seed(21, "attack_env", ++episode)) : r.state;
  }
}

TEST(Rollout, DeterministicForFixedSeeds) {
  const Simulator sim = make_sim(ScenarioKind::Merge);
  const AttackEnv env{&sim, {2, 3}, {}, default_shaping(ScenarioKind::Merge)};
  const AttackerState st = init_attackers(tiny_train(), 3);
  const DefenderPolicy def = make_dp_defender(DefenderKind::Rvi, default_abstraction(ScenarioKind::Merge));
  auto run = [&] {
    RolloutCollector c(env, 2, 31);
    Rng rng(4);
    return c.collect(st.actor, st.critic, def, 16, rng);
  };
  const RolloutBatch a = run(), b = run();
  EXPECT_EQ(a.obs, b.obs);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.log_probs, b.log_probs);
  EXPECT_EQ(a.rewards, b.rewards);
  EXPECT_EQ(a.dones, b.dones);
  EXPECT_EQ(a.bootstrap_values, b.bootstrap_values);
}

TEST(Rollout, RejectsBadAttackerCount) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  EXPECT_THROW(RolloutCollector(AttackEnv{&sim, {4, 2}, {}, {}}, 1, 1), ConfigError);
  EXPECT_THROW(RolloutCollector(AttackEnv{&sim, {0, 2}, {}, {}}, 1, 1), ConfigError);
}

TEST(RunEpisode, RecordsEveryStepAndStats) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  const AttackEnv env{&sim, {2, 4}, {}, {}};
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, default_abstraction(ScenarioKind::Highway));
  Rng rng(1);
  EpisodeStats stats;
  const EpisodeRecord rec = run_episode(env, def, AttackerControl::Random, nullptr, 77, rng, &stats);
  ASSERT_FALSE(rec.steps.empty());
  EXPECT_TRUE(rec.steps.back().state.terminal);
  EXPECT_EQ(stats.episodes, 1);
  EXPECT_LE(stats.aggressive_steps, stats.attacker_steps);
  EXPECT_EQ(rec.initial, sim.reset(env.counts, 77));
  // Replaying the recorded joint actions regenerates the same states.
  EnvState s = rec.initial;
  for (const StepRecord& step : rec.steps) {
    s = sim.step(s, step.actions).state;
    EXPECT_EQ(s, step.state);
  }
}

TEST(RunEpisode, GreedyNeedsActor) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  const EnvState s = sim.reset({1, 2}, 1);
  Rng rng(1);
  EXPECT_THROW(attacker_actions(s, AttackerControl::Greedy, nullptr, rng), UsageError);
}

TEST(Trainer, IterationsAreDeterministicAndResumable) {
  const Simulator sim = make_sim(ScenarioKind::Highway);
  const AttackEnv env{&sim, {2, 4}, {}, {}};
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, default_abstraction(ScenarioKind::Highway));
  const AttackTrainConfig cfg = tiny_train();
  auto run = [&] {
    AttackerTrainer tr(env, def, cfg, 8, init_attackers(cfg, 8));
    std::vector<IterationReport> reports;
    while (!tr.done()) reports.push_back(tr.iterate());
    return std::make_pair(tr.state().actor, reports);
  };
  const auto [actor_a, rep_a] = run();
  const auto [actor_b, rep_b] = run();
  ASSERT_EQ(rep_a.size(), 2u);
  EXPECT_EQ(actor_a, actor_b);
  for (std::size_t i = 0; i < rep_a.size(); ++i) {
    EXPECT_EQ(rep_a[i].env_steps, static_cast<std::int64_t>(16 * (i + 1)));
    EXPECT_EQ(rep_a[i].update.actor_loss, rep_b[i].update.actor_loss);
    EXPECT_GE(rep_a[i].update.entropy, 0.0);
    EXPECT_LE(rep_a[i].update.entropy, std::log(5.0) + 1e-12);
  }

  // Resuming from a mid-run state keeps counting from where it stopped.
  AttackerTrainer first(env, def, cfg, 8, init_attackers(cfg, 8));
  first.iterate();
  AttackerTrainer resumed(env, def, cfg, 8, first.state());
  const IterationReport r = resumed.iterate();
  EXPECT_EQ(r.iteration, 1);
  EXPECT_EQ(r.env_steps, 32);
  EXPECT_TRUE(resumed.done());
}
