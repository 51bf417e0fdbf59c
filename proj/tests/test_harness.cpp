#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "avstress/harness.hpp"
#include "avstress/render.hpp"

using namespace avstress;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "avstress_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json tiny_json(const std::string& out) {
  return {{"scenario", "highway"},
          {"output_dir", out},
          {"train", {{"total_steps", 512}, {"envs", 2}, {"rollout_len", 128}, {"hidden", {16, 16}},
                     {"epochs", 2}, {"checkpoint_every", 1}}},
          {"eval", {{"episodes", 3}, {"seeds", {1, 2}}}}};
}

CommandContext quiet_ctx(const fs::path& root, std::ostringstream& sink) {
  CommandContext ctx;
  ctx.output_root = root;
  ctx.out = &sink;
  ctx.err = &sink;
  return ctx;
}

}  // namespace

TEST(Config, MinimalConfigFillsScenarioDefaults) {
  const ExperimentConfig cfg = config_from_json({{"scenario", "roundabout"}, {"defender", {{"type", "vi"}}}});
  EXPECT_EQ(cfg.scenario, ScenarioKind::Roundabout);
  EXPECT_EQ(cfg.n_attackers, 2);
  EXPECT_EQ(cfg.sim, default_sim_config(ScenarioKind::Roundabout));
  EXPECT_EQ(cfg.shaping.w_d, 0.04);
  EXPECT_EQ(cfg.defender.abstraction.speed_levels, (std::vector<double>{5, 10, 15}));
  EXPECT_EQ(cfg.eval.episodes, 200);
  EXPECT_EQ(cfg.eval.seeds.size(), 3u);
  EXPECT_EQ(cfg.har.phi, 10.0);
  EXPECT_EQ(cfg.har.rho, -10.5);
  EXPECT_EQ(cfg.train.ppo.entropy_coef, 0.01);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(config_error({{"n_attackers", 4}}).find("n_attackers"), std::string::npos);
  EXPECT_NE(config_error({{"har", {{"bogus", 1}}}}).find("har.bogus: unknown key"), std::string::npos);
  EXPECT_NE(config_error({{"train", {{"epochs", "ten"}}}}).find("train.epochs: expected integer"),
            std::string::npos);
  EXPECT_NE(config_error({{"eval", {{"seeds", {1, -2}}}}}).find("eval.seeds[1]"), std::string::npos);
  EXPECT_NE(config_error({{"defender", {{"type", "mpc"}}}}).find("defender.type"), std::string::npos);
  EXPECT_NE(config_error({{"har", {{"rho", 2.0}}}}).find("har"), std::string::npos);
  EXPECT_NE(config_error({{"scenario", "desert"}}).find("scenario"), std::string::npos);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(parse_config("/nonexistent/avstress.json"), ConfigError);
  const fs::path dir = scratch_dir("bad_json");
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(parse_config(dir / "broken.json"), ConfigError);
}

TEST(Config, SerializeParseRoundTrip) {
  ExperimentConfig cfg = config_from_json({{"scenario", "merge"},
                                           {"n_attackers", 3},
                                           {"seed", 42},
                                           {"defender", {{"type", "d3qn"}, {"checkpoint", "x.ckpt"}}},
                                           {"har", {{"phi", 10}, {"mode", "collision_only"}}}});
  const ExperimentConfig again = config_from_json(json::parse(serialize_config(cfg)));
  EXPECT_EQ(to_json(again), to_json(cfg));
  EXPECT_EQ(config_hash(again), config_hash(cfg));
  EXPECT_EQ(again.defender.checkpoint, std::optional<std::string>("x.ckpt"));
  EXPECT_EQ(again.har.mode, RewardMode::CollisionOnly);
}

TEST(Config, HashIgnoresEvalAndOutputButNotTraining) {
  const ExperimentConfig a = config_from_json({{"scenario", "highway"}});
  ExperimentConfig b = a;
  b.eval.episodes = 7;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.train.ppo.entropy_coef = 0.02;
  EXPECT_NE(config_hash(a), config_hash(b));
  // Integer and float spellings of the same value hash identically.
  EXPECT_EQ(config_hash(config_from_json({{"har", {{"phi", 10}}}})),
            config_hash(config_from_json({{"har", {{"phi", 10.0}}}})));
  ExperimentConfig c = a;
  c.n_attackers = 1;
  EXPECT_EQ(defender_hash(a), defender_hash(c));
  c.defender.reward.w_v = 0.5;
  EXPECT_NE(defender_hash(a), defender_hash(c));
}

TEST(EvalReport, FormatMatchesTableStyle) {
  EXPECT_EQ(format_rate(0.4788, 0.00232), "47.88% (0.232)");
  EXPECT_EQ(format_rate(0.0, 0.0), "0.00% (0.000)");
  EXPECT_EQ(format_rate(1.0, std::nullopt), "100.00%");
  const std::regex pattern(R"(\d{1,3}\.\d{2}% \(\d+\.\d{3}\))");
  EXPECT_TRUE(std::regex_match(format_rate(0.123456, 0.0456), pattern));
}

TEST(EvalReport, SummaryStatistics) {
  std::vector<SeedResult> seeds(3);
  const int successes[3] = {2, 4, 6};
  for (int i = 0; i < 3; ++i) {
    seeds[i].seed = i;
    seeds[i].stats.episodes = 10;
    seeds[i].stats.defender_collisions = successes[i];
    seeds[i].stats.defender_off_road = i == 0 ? 1 : 0;
  }
  const EvalReport r = summarize(seeds);
  EXPECT_DOUBLE_EQ(r.mean, 0.4);
  ASSERT_TRUE(r.std.has_value());
  EXPECT_NEAR(*r.std, 0.2, 1e-12);  // sample std of {0.2, 0.4, 0.6}
  EXPECT_EQ(r.episodes, 30);
  EXPECT_NEAR(r.off_road_rate, 1.0 / 30, 1e-15);
  EXPECT_FALSE(summarize({seeds[0]}).std.has_value());
}

TEST(Evaluate, DefenderAloneNeverCollides) {
  ExperimentConfig cfg = config_from_json({{"eval", {{"episodes", 5}, {"seeds", {1, 2}}}}});
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, cfg.defender.abstraction);
  const EvalReport r = evaluate(cfg, def, AttackerControl::Idle, nullptr, {0, 0});
  EXPECT_EQ(r.formatted(), "0.00% (0.000)");
  EXPECT_EQ(r.episodes, 10);
}

TEST(Evaluate, ForcedCollisionsScoreHundredPercent) {
  // One lane, traffic far slower than the defender's slowest speed level.
  ExperimentConfig cfg = config_from_json(
      {{"n_npcs", 6},
       {"geometry", {{"highway_lanes", 1}}},
       {"npc", {{"v0_min", 2.0}, {"v0_max", 3.0}}},
       {"kinematics", {{"defender_speed", 30.0}}},
       {"eval", {{"episodes", 10}, {"seeds", {1, 2}}}}});
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, cfg.defender.abstraction);
  const EvalReport r = evaluate(cfg, def, AttackerControl::Idle, nullptr, {0, cfg.n_npcs});
  EXPECT_EQ(r.formatted(), "100.00% (0.000)");
}

TEST(Evaluate, ReproduciblePerSeed) {
  ExperimentConfig cfg = config_from_json({{"eval", {{"episodes", 4}, {"seeds", {5, 6}}}}});
  const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, cfg.defender.abstraction);
  const EvalReport a = evaluate(cfg, def, AttackerControl::Random, nullptr, {2, 4});
  const EvalReport b = evaluate(cfg, def, AttackerControl::Random, nullptr, {2, 4});
  ASSERT_EQ(a.seeds.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(a.seeds[i].stats.defender_collisions, b.seeds[i].stats.defender_collisions);
    EXPECT_EQ(a.seeds[i].stats.aggressive_steps, b.seeds[i].stats.aggressive_steps);
  }
}

class TraceFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = config_from_json({{"scenario", "merge"}});
    const Simulator sim = make_simulator(cfg);
    const AttackEnv env = make_attack_env(cfg, sim);
    const DefenderPolicy def = make_dp_defender(DefenderKind::Vi, cfg.defender.abstraction);
    Rng rng(4);
    // Random attackers crash into things often enough to exercise events.
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      episode = run_episode(env, def, AttackerControl::Random, nullptr, seed, rng);
      if (episode.steps.back().state.terminal_reason == TerminalReason::DefenderCollision) break;
    }
    trace = make_trace(cfg, episode);
  }

  ExperimentConfig cfg;
  EpisodeRecord episode;
  Trace trace;
};

TEST_F(TraceFixture, JsonRoundTripAndReplay) {
  ASSERT_TRUE(trace.steps.back().events.defender_collision);
  const fs::path dir = scratch_dir("trace_roundtrip");
  save_trace(trace, dir / "t.json");
  const Trace loaded = load_trace(dir / "t.json");
  EXPECT_EQ(trace_to_json(loaded), trace_to_json(trace));
  std::ostringstream log;
  const ReplayResult r = replay_trace(loaded, 1e-9, &log);
  EXPECT_EQ(r.steps_checked, static_cast<int>(trace.steps.size()));
  EXPECT_EQ(r.max_deviation, 0.0);
  EXPECT_FALSE(r.code_version_mismatch);
  EXPECT_NE(log.str().find("DEFENDER COLLISION"), std::string::npos);
}

TEST_F(TraceFixture, TamperedPositionNamesStep) {
  Trace bad = trace;
  const int k = static_cast<int>(bad.steps.size()) / 2;
  bad.steps[static_cast<std::size_t>(k)].vehicles[1].x += 1e-6;
  try {
    replay_trace(bad);
    FAIL() << "tampering went unnoticed";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("step " + std::to_string(k + 1)), std::string::npos) << e.what();
  }
}

TEST_F(TraceFixture, VersionHandling) {
  json j = trace_to_json(trace);
  j["version"] = kTraceVersion + 1;
  EXPECT_THROW(trace_from_json(j), IntegrityError);
  j = trace_to_json(trace);
  j.erase("steps");
  EXPECT_THROW(trace_from_json(j), IntegrityError);
  Trace old = trace;
  old.code_version = "0.0.1";
  std::ostringstream log;
  EXPECT_TRUE(replay_trace(old, 1e-9, &log).code_version_mismatch);
  EXPECT_NE(log.str().find("warning"), std::string::npos);
  EXPECT_THROW(load_trace("/nonexistent/trace.json"), ArtifactError);
}

TEST_F(TraceFixture, RenderFramesAreCountedDeterministicAndMarked) {
  const fs::path a = scratch_dir("render_a"), b = scratch_dir("render_b");
  const auto fa = render_trace(trace, a);
  const auto fb = render_trace(trace, b);
  ASSERT_EQ(fa.size(), trace.steps.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(slurp(fa[i]), slurp(fb[i]));
  const std::string last = slurp(fa.back());
  EXPECT_NE(last.find("collision-marker"), std::string::npos);
  EXPECT_NE(last.find("#d62728"), std::string::npos);  // defender in red
  EXPECT_NE(last.find("class=\"vehicle attacker\""), std::string::npos);
  EXPECT_EQ(slurp(fa.front()).find("collision-marker"), std::string::npos);
}

TEST(Commands, TrainArtifactsDeterminismAndResume) {
  const fs::path root = scratch_dir("train_cmd");
  std::ostringstream sink;
  const CommandContext ctx = quiet_ctx(root, sink);
  const fs::path cfg_a = write_config(root, tiny_json("a"));
  cmd_train(cfg_a, ctx);
  const fs::path run = root / "a";
  EXPECT_TRUE(fs::exists(run / "checkpoints" / "actor_latest.ckpt"));
  EXPECT_TRUE(fs::exists(run / "checkpoints" / "actor_000001.ckpt"));
  const std::string metrics = slurp(run / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);  // header + 2 updates
  const Trace t = load_trace(run / "traces" / "train_iter_000000.json");
  EXPECT_EQ(replay_trace(t).max_deviation, 0.0);

  // Same config in another directory: identical metrics.
  const fs::path other = scratch_dir("train_cmd_b");
  cmd_train(write_config(other, tiny_json("a")), quiet_ctx(other, sink));
  EXPECT_EQ(slurp(other / "a" / "metrics.csv"), metrics);

  // Simulate an interruption after the first iteration and resume.
  fs::copy_file(run / "checkpoints" / "actor_000001.ckpt", run / "checkpoints" / "actor_latest.ckpt",
                fs::copy_options::overwrite_existing);
  fs::copy_file(run / "checkpoints" / "critic_000001.ckpt", run / "checkpoints" / "critic_latest.ckpt",
                fs::copy_options::overwrite_existing);
  const TrainOutcome resumed = run_training(parse_config(cfg_a), ctx);
  EXPECT_TRUE(resumed.resumed);
  EXPECT_EQ(resumed.state.env_steps, 512);
  std::istringstream rows(slurp(run / "metrics.csv"));
  std::string line;
  std::getline(rows, line);
  std::vector<long> steps;
  while (std::getline(rows, line)) steps.push_back(std::stol(line.substr(line.find(',') + 1)));
  EXPECT_EQ(steps, (std::vector<long>{256, 512}));
}

TEST(Commands, EvalRefusesForeignAttackerWithoutOverride) {
  const fs::path root = scratch_dir("eval_cmd");
  std::ostringstream sink;
  const CommandContext ctx = quiet_ctx(root, sink);
  cmd_train(write_config(root, tiny_json("run")), ctx);
  json other = tiny_json("run");
  other["har"] = {{"mode", "collision_only"}};
  const fs::path other_cfg = root / "other.json";
  std::ofstream(other_cfg) << other.dump();
  EXPECT_THROW(cmd_eval(other_cfg, {}, ctx), ArtifactError);
  EvalOptions o;
  o.allow_mismatch = true;
  const EvalReport r = cmd_eval(other_cfg, o, ctx);
  EXPECT_EQ(r.episodes, 6);
  EXPECT_TRUE(fs::exists(root / "run" / "eval" / "attacker_vs_vi.json"));
  EXPECT_TRUE(fs::exists(root / "run" / "eval" / "attacker_vs_vi_seed1.json"));

  EvalOptions npc;
  npc.baseline = "npc";
  cmd_eval(root / "config.json", npc, ctx);
  const Trace t = load_trace(root / "run" / "eval" / "npc_vs_vi_seed1.json");
  for (const TraceVehicle& v : t.initial) EXPECT_NE(v.role, Role::Attacker);
  EXPECT_EQ(t.counts.npcs, 6);
}

TEST(Commands, MissingArtifactsAndExitCodes) {
  const fs::path root = scratch_dir("exit_codes");
  std::ostringstream sink;
  const CommandContext ctx = quiet_ctx(root, sink);
  const fs::path cfg = write_config(root, tiny_json("none"));
  EXPECT_THROW(cmd_eval(cfg, {}, ctx), ArtifactError);
  EXPECT_THROW(cmd_replay(root / "missing.json", ctx), ArtifactError);
  EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
  EXPECT_EQ(exit_code_for(ArtifactError("x")), 3);
  EXPECT_EQ(exit_code_for(IntegrityError("x")), 4);
  EXPECT_EQ(exit_code_for(NumericError("x")), 1);
}
