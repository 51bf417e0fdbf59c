#include "avstress/harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "avstress/render.hpp"

namespace avstress {

namespace fs = std::filesystem;

namespace {

std::ostream& out_of(const CommandContext& ctx) { return ctx.out ? *ctx.out : std::cout; }

std::string iter_name(const char* prefix, int iteration, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06d%s", prefix, iteration, ext);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError(path.string() + ": cannot write");
  out << text;
  if (!out) throw ArtifactError(path.string() + ": write failed");
}

void write_resolved_config(const ExperimentConfig& cfg, const fs::path& dir) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["config_hash"] = hash_hex(config_hash(cfg));
  j["code_version"] = kCodeVersion;
  write_text(dir / "config.json", j.dump(2) + "\n");
}

const char* kMetricsHeader =
    "iteration,env_steps,actor_loss,critic_loss,entropy,clip_fraction,approx_kl,"
    "mean_episode_har,attack_success_rate_window,episodes,aggressive_rate\n";

std::string metrics_row(const IterationReport& r, int attackers) {
  std::ostringstream row;
  row << r.iteration << ',' << r.env_steps << ',' << fmt(r.update.actor_loss) << ','
      << fmt(r.update.critic_loss) << ',' << fmt(r.update.entropy) << ','
      << fmt(r.update.clip_fraction) << ',' << fmt(r.update.approx_kl) << ','
      << fmt(r.window.mean_episode_har(attackers)) << ',' << fmt(r.window.success_rate()) << ','
      << r.window.episodes << ',' << fmt(r.window.aggressive_rate()) << '\n';
  return row.str();
}

// Keeps the header and the rows of iterations before `keep_below`.
void truncate_metrics(const fs::path& path, int keep_below) {
  std::string kept = kMetricsHeader;
  std::ifstream in(path);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) < keep_below) kept += line + "\n";
  }
  in.close();
  write_text(path, kept);
}

void append_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw ArtifactError(path.string() + ": cannot append");
  out << text;
}

void save_attackers(const AttackerState& s, std::uint64_t hash, const fs::path& actor_path,
                    const fs::path& critic_path) {
  save_checkpoint({kCheckpointVersion, CheckpointRole::AttackerActor, hash, s.env_steps, s.actor,
                   s.actor_opt},
                  actor_path);
  save_checkpoint({kCheckpointVersion, CheckpointRole::AttackerCritic, hash, s.env_steps, s.critic,
                   s.critic_opt},
                  critic_path);
}

NetParams load_actor(const fs::path& path, std::uint64_t hash, bool allow_mismatch) {
  const Checkpoint c = load_checkpoint(path, hash, allow_mismatch);
  if (c.role != CheckpointRole::AttackerActor) {
    throw ArtifactError(path.string() + ": expected an attacker_actor checkpoint, found " +
                        std::string(to_string(c.role)));
  }
  if (c.params.input_dim() != kObservationDim || c.params.output_dim() != kNumActions) {
    throw ArtifactError(path.string() + ": attacker network has the wrong shape");
  }
  return c.params;
}

CheckpointRole role_for(DefenderKind kind) {
  return kind == DefenderKind::D3qn ? CheckpointRole::DefenderD3qn : CheckpointRole::DefenderPpo;
}

std::string eval_label(const EvalOptions& o, const ExperimentConfig& cfg) {
  std::string who = o.baseline ? *o.baseline : "attacker";
  return who + "_vs_" + std::string(to_string(cfg.defender.type));
}

}  // namespace

fs::path output_root_from_env() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) : fs::path(".");
}

fs::path run_dir(const ExperimentConfig& cfg, const CommandContext& ctx) {
  return ctx.output_root / cfg.output_dir;
}

Simulator make_simulator(const ExperimentConfig& cfg) {
  return Simulator(std::make_shared<const RoadNetwork>(build_scenario(cfg.scenario, cfg.geometry)),
                   cfg.sim);
}

AttackEnv make_attack_env(const ExperimentConfig& cfg, const Simulator& sim) {
  return AttackEnv{&sim, {cfg.n_attackers, cfg.n_npcs}, cfg.har, cfg.shaping};
}

fs::path defender_checkpoint_path(const ExperimentConfig& cfg, const CommandContext& ctx) {
  if (cfg.defender.checkpoint) return fs::path(*cfg.defender.checkpoint);
  return run_dir(cfg, ctx) / "defender" / (std::string(to_string(cfg.defender.type)) + ".ckpt");
}

fs::path train_defender(const ExperimentConfig& cfg, const CommandContext& ctx) {
  const DefenderKind kind = cfg.defender.type;
  if (kind == DefenderKind::Vi || kind == DefenderKind::Rvi) {
    throw UsageError(std::string(to_string(kind)) + " defenders are solved online and need no training");
  }
  std::ostream& out = out_of(ctx);
  const Simulator sim = make_simulator(cfg);
  const DefenderEnv env{&sim, cfg.defender.train_npcs, cfg.defender.reward};
  const std::uint64_t seed = derive_seed(cfg.seed, "defender_train");
  auto progress = [&](const DefenderTrainProgress& p) {
    out << "defender " << to_string(kind) << " steps=" << p.steps << " episodes=" << p.episodes
        << " mean_return=" << fmt(p.mean_return) << " collision_rate=" << fmt(p.collision_rate)
        << '\n';
  };
  Checkpoint ckpt;
  ckpt.role = role_for(kind);
  ckpt.config_hash = defender_hash(cfg);
  if (kind == DefenderKind::D3qn) {
    D3qnResult r = train_d3qn(env, cfg.defender.d3qn, seed, progress);
    ckpt.train_steps = r.steps;
    ckpt.params = r.online;
    ckpt.opt = r.opt;
  } else {
    PpoDefenderResult r = train_ppo_defender(env, cfg.defender.ppo, seed, progress);
    ckpt.train_steps = r.steps;
    ckpt.params = r.actor;
    ckpt.opt = r.actor_opt;
  }
  const fs::path path = defender_checkpoint_path(cfg, ctx);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(ckpt, path);
  out << "wrote " << path.string() << '\n';
  return path;
}

DefenderPolicy resolve_defender(const ExperimentConfig& cfg, const CommandContext& ctx,
                                bool allow_mismatch) {
  const DefenderKind kind = cfg.defender.type;
  if (kind == DefenderKind::Vi || kind == DefenderKind::Rvi) {
    return make_dp_defender(kind, cfg.defender.abstraction);
  }
  fs::path path = defender_checkpoint_path(cfg, ctx);
  if (!fs::exists(path)) {
    if (cfg.defender.checkpoint) throw ArtifactError(path.string() + ": defender checkpoint not found");
    out_of(ctx) << "no " << to_string(kind) << " defender checkpoint; training one\n";
    path = train_defender(cfg, ctx);
  }
  const Checkpoint c = load_checkpoint(path, defender_hash(cfg), allow_mismatch);
  if (c.role != role_for(kind)) {
    throw ArtifactError(path.string() + ": checkpoint role " + std::string(to_string(c.role)) +
                        " does not match defender type " + std::string(to_string(kind)));
  }
  DefenderPolicy p;
  p.kind = kind;
  p.abstraction = cfg.defender.abstraction;
  p.net = c.params;
  p.config_hash = c.config_hash;
  return p;
}

std::string format_rate(double mean, std::optional<double> std) {
  char buf[64];
  if (std) {
    std::snprintf(buf, sizeof buf, "%.2f%% (%.3f)", 100.0 * mean, 100.0 * *std);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * mean);
  }
  return buf;
}

std::string EvalReport::formatted() const { return format_rate(mean, std); }

EvalReport summarize(std::vector<SeedResult> seeds) {
  EvalReport r;
  r.seeds = std::move(seeds);
  EpisodeStats total;
  for (const SeedResult& s : r.seeds) {
    r.mean += s.stats.success_rate();
    total.merge(s.stats);
  }
  const double n = static_cast<double>(r.seeds.size());
  if (n > 0) r.mean /= n;
  if (r.seeds.size() >= 2) {
    double ss = 0.0;
    for (const SeedResult& s : r.seeds) ss += std::pow(s.stats.success_rate() - r.mean, 2);
    r.std = std::sqrt(ss / (n - 1));
  }
  r.episodes = total.episodes;
  r.off_road_rate = total.episodes ? double(total.defender_off_road) / total.episodes : 0.0;
  r.aggressive_rate = total.aggressive_rate();
  return r;
}

EvalReport evaluate(const ExperimentConfig& cfg, const DefenderPolicy& defender,
                    AttackerControl control, const NetParams* actor, RoleCounts counts,
                    std::vector<EpisodeRecord>* first_episodes) {
  const Simulator sim = make_simulator(cfg);
  AttackEnv env = make_attack_env(cfg, sim);
  env.counts = counts;
  std::vector<SeedResult> results;
  for (std::uint64_t seed : cfg.eval.seeds) {
    SeedResult sr;
    sr.seed = seed;
    Rng rng = derive_rng(seed, "eval_actions");
    for (int i = 0; i < cfg.eval.episodes; ++i) {
      EpisodeRecord rec = run_episode(env, defender, control, actor,
                                      derive_seed(seed, "eval_episode", static_cast<std::uint64_t>(i)),
                                      rng, &sr.stats);
      if (i == 0 && first_episodes) first_episodes->push_back(std::move(rec));
    }
    results.push_back(sr);
  }
  return summarize(std::move(results));
}

TrainOutcome run_training(const ExperimentConfig& cfg, const CommandContext& ctx) {
  std::ostream& out = out_of(ctx);
  TrainOutcome outcome;
  outcome.dir = run_dir(cfg, ctx);
  const fs::path ckpt_dir = outcome.dir / "checkpoints";
  const fs::path trace_dir = outcome.dir / "traces";
  const fs::path metrics = outcome.dir / "metrics.csv";
  fs::create_directories(ckpt_dir);
  write_resolved_config(cfg, outcome.dir);

  const std::uint64_t hash = config_hash(cfg);
  const DefenderPolicy defender = resolve_defender(cfg, ctx);
  const Simulator sim = make_simulator(cfg);
  const AttackEnv env = make_attack_env(cfg, sim);
  const std::int64_t per_iteration = static_cast<std::int64_t>(cfg.train.envs) * cfg.train.rollout_len;

  AttackerState state;
  const fs::path latest_actor = ckpt_dir / "actor_latest.ckpt";
  const fs::path latest_critic = ckpt_dir / "critic_latest.ckpt";
  if (fs::exists(latest_actor) && fs::exists(latest_critic)) {
    Checkpoint a = load_checkpoint(latest_actor, hash);
    Checkpoint c = load_checkpoint(latest_critic, hash);
    if (a.role != CheckpointRole::AttackerActor || c.role != CheckpointRole::AttackerCritic ||
        !a.opt || !c.opt || a.train_steps != c.train_steps || a.train_steps % per_iteration != 0) {
      throw IntegrityError("latest checkpoints in " + ckpt_dir.string() + " are inconsistent");
    }
    state.actor = std::move(a.params);
    state.critic = std::move(c.params);
    state.actor_opt = std::move(*a.opt);
    state.critic_opt = std::move(*c.opt);
    state.env_steps = a.train_steps;
    state.iteration = static_cast<int>(a.train_steps / per_iteration);
    outcome.resumed = true;
    out << "resuming from iteration " << state.iteration << " (" << state.env_steps << " steps)\n";
    truncate_metrics(metrics, state.iteration);
  } else {
    state = init_attackers(cfg.train, derive_seed(cfg.seed, "attackers"));
    write_text(metrics, kMetricsHeader);
  }

  AttackerTrainer trainer(env, defender, cfg.train, derive_seed(cfg.seed, "attack_train"), state);
  auto checkpoint = [&](int iteration) {
    save_attackers(trainer.state(), hash, ckpt_dir / iter_name("actor", iteration, ".ckpt"),
                   ckpt_dir / iter_name("critic", iteration, ".ckpt"));
    save_attackers(trainer.state(), hash, latest_actor, latest_critic);
  };
  while (!trainer.done()) {
    const int it = trainer.state().iteration;
    if (it % cfg.trace_every == 0) {
      // The iteration's trace: one sampled episode from the current policy.
      Rng rng = derive_rng(cfg.seed, "trace_actions", static_cast<std::uint64_t>(it));
      const EpisodeRecord rec =
          run_episode(env, defender, AttackerControl::Sample, &trainer.state().actor,
                      derive_seed(cfg.seed, "trace_episode", static_cast<std::uint64_t>(it)), rng);
      const fs::path path = trace_dir / iter_name("train_iter", it, ".json");
      save_trace(make_trace(cfg, rec), path);
      outcome.traces.push_back(path);
    }
    IterationReport r;
    try {
      r = trainer.iterate();
    } catch (const Error& e) {
      throw NumericError("training failed at iteration " + std::to_string(it) + ": " + e.what());
    }
    append_text(metrics, metrics_row(r, cfg.n_attackers));
    if (r.iteration % 10 == 0 || trainer.done()) {
      out << "iter " << r.iteration << " steps=" << r.env_steps
          << " success=" << fmt(r.window.success_rate())
          << " har=" << fmt(r.window.mean_episode_har(cfg.n_attackers))
          << " entropy=" << fmt(r.update.entropy) << '\n';
    }
    if ((r.iteration + 1) % cfg.checkpoint_every == 0 || trainer.done()) checkpoint(r.iteration + 1);
  }
  if (!fs::exists(latest_actor)) checkpoint(trainer.state().iteration);
  outcome.state = trainer.state();
  return outcome;
}

void cmd_train(const fs::path& config, const CommandContext& ctx) {
  const ExperimentConfig cfg = parse_config(config);
  const TrainOutcome o = run_training(cfg, ctx);
  out_of(ctx) << "training done: " << o.state.env_steps << " env steps, " << o.state.iteration
              << " iterations, artifacts in " << o.dir.string() << '\n';
}

EvalReport cmd_eval(const fs::path& config, const EvalOptions& options, const CommandContext& ctx) {
  ExperimentConfig cfg = parse_config(config);
  if (options.defender) {
    try {
      cfg.defender.type = defender_kind_from_string(*options.defender);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--defender: ") + e.what());
    }
  }
  if (options.stochastic) cfg.eval.stochastic = true;
  if (options.attacker && options.baseline) {
    throw UsageError("--attacker and --baseline are mutually exclusive");
  }
  const DefenderPolicy defender = resolve_defender(cfg, ctx, options.allow_mismatch);
  RoleCounts counts{cfg.n_attackers, cfg.n_npcs};
  AttackerControl control = cfg.eval.stochastic ? AttackerControl::Sample : AttackerControl::Greedy;
  std::optional<NetParams> actor;
  if (options.baseline) {
    if (*options.baseline == "random") {
      control = AttackerControl::Random;
    } else if (*options.baseline == "npc") {
      // Every attacker slot becomes an ordinary NPC.
      control = AttackerControl::Idle;
      counts = {0, cfg.n_npcs + cfg.n_attackers};
    } else {
      throw UsageError("--baseline must be 'random' or 'npc'");
    }
  } else {
    const fs::path path = options.attacker ? *options.attacker
                                           : run_dir(cfg, ctx) / "checkpoints" / "actor_latest.ckpt";
    actor = load_actor(path, config_hash(cfg), options.allow_mismatch);
  }

  std::vector<EpisodeRecord> firsts;
  const EvalReport report = evaluate(cfg, defender, control, actor ? &*actor : nullptr, counts, &firsts);

  const fs::path dir = run_dir(cfg, ctx) / "eval";
  const std::string label = eval_label(options, cfg);
  nlohmann::json j;
  j["label"] = label;
  j["config_hash"] = hash_hex(config_hash(cfg));
  j["config"] = to_json(cfg);
  j["success_rate"] = report.mean;
  j["std"] = report.std ? nlohmann::json(*report.std) : nlohmann::json(nullptr);
  j["formatted"] = report.formatted();
  j["episodes"] = report.episodes;
  j["off_road_rate"] = report.off_road_rate;
  j["aggressive_rate"] = report.aggressive_rate;
  nlohmann::json per_seed = nlohmann::json::array();
  for (std::size_t i = 0; i < report.seeds.size(); ++i) {
    const SeedResult& s = report.seeds[i];
    per_seed.push_back({{"seed", s.seed},
                        {"episodes", s.stats.episodes},
                        {"successes", s.stats.defender_collisions},
                        {"off_road", s.stats.defender_off_road},
                        {"success_rate", s.stats.success_rate()}});
    save_trace(make_trace(cfg, firsts[i]), dir / (label + "_seed" + std::to_string(s.seed) + ".json"));
  }
  j["seeds"] = per_seed;
  write_text(dir / (label + ".json"), j.dump(2) + "\n");

  std::ostream& out = out_of(ctx);
  for (const SeedResult& s : report.seeds) {
    out << "seed " << s.seed << ": " << s.stats.defender_collisions << "/" << s.stats.episodes
        << " defender collisions\n";
  }
  out << "attack success rate (" << label << "): " << report.formatted() << "  episodes="
      << report.episodes << "  off-road=" << format_rate(report.off_road_rate, std::nullopt)
      << "  penalized-actions=" << format_rate(report.aggressive_rate, std::nullopt) << '\n';
  return report;
}

std::vector<std::pair<int, EvalReport>> cmd_ablate(const fs::path& config, const CommandContext& ctx) {
  const ExperimentConfig base = parse_config(config);
  const int others = base.n_attackers + base.n_npcs;
  std::vector<std::pair<int, EvalReport>> rows;
  std::ostream& out = out_of(ctx);
  std::string csv = "attackers,npcs,success_mean_pct,success_std_pct,episodes,seeds\n";
  for (int k = 1; k <= 3; ++k) {
    if (others - k < 0) throw ConfigError("ablation needs at least 3 non-defender vehicles");
    ExperimentConfig cfg = base;
    cfg.n_attackers = k;
    // Attacker slots that are not used keep their vehicles as NPCs.
    cfg.n_npcs = others - k;
    cfg.output_dir = base.output_dir + "/ablate_k" + std::to_string(k);
    out << "== " << k << " attacker(s), " << cfg.n_npcs << " NPCs ==\n";
    const TrainOutcome trained = run_training(cfg, ctx);
    const DefenderPolicy defender = resolve_defender(cfg, ctx);
    std::vector<EpisodeRecord> firsts;
    const EvalReport r = evaluate(cfg, defender, AttackerControl::Greedy, &trained.state.actor,
                                  {cfg.n_attackers, cfg.n_npcs}, &firsts);
    for (std::size_t i = 0; i < firsts.size(); ++i) {
      save_trace(make_trace(cfg, firsts[i]), trained.dir / "eval" /
                                                 ("attacker_seed" + std::to_string(cfg.eval.seeds[i]) + ".json"));
    }
    std::string seeds;
    for (std::size_t i = 0; i < cfg.eval.seeds.size(); ++i) {
      seeds += (i ? " " : "") + std::to_string(cfg.eval.seeds[i]);
    }
    csv += std::to_string(k) + "," + std::to_string(cfg.n_npcs) + "," + fmt(100 * r.mean) + "," +
           (r.std ? fmt(100 * *r.std) : std::string()) + "," + std::to_string(r.episodes) + "," +
           seeds + "\n";
    rows.emplace_back(k, r);
  }
  write_text(ctx.output_root / base.output_dir / "ablation.csv", csv);
  out << "\nattackers  success rate\n";
  for (const auto& [k, r] : rows) out << "        " << k << "   " << r.formatted() << '\n';
  return rows;
}

ReplayResult cmd_replay(const fs::path& trace_path, const CommandContext& ctx) {
  const Trace trace = load_trace(trace_path);
  std::ostream& out = out_of(ctx);
  const ReplayResult r = replay_trace(trace, 1e-9, &out);
  out << "replay ok: " << r.steps_checked << " steps, max deviation " << r.max_deviation << '\n';
  return r;
}

std::vector<fs::path> cmd_render(const fs::path& trace_path, const fs::path& out_dir,
                                 const CommandContext& ctx) {
  const Trace trace = load_trace(trace_path);
  const std::vector<fs::path> frames = render_trace(trace, out_dir);
  out_of(ctx) << "wrote " << frames.size() << " frames to " << out_dir.string() << '\n';
  return frames;
}

void cmd_defender_train(const fs::path& config, const CommandContext& ctx) {
  const ExperimentConfig cfg = parse_config(config);
  if (cfg.defender.type == DefenderKind::Vi || cfg.defender.type == DefenderKind::Rvi) {
    out_of(ctx) << to_string(cfg.defender.type)
                << " defender is solved online from the abstraction; nothing to train\n";
    return;
  }
  train_defender(cfg, ctx);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ArtifactError*>(&e)) return 3;
  if (dynamic_cast<const IntegrityError*>(&e)) return 4;
  return 1;
}

}  // namespace avstress
