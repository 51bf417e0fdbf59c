#include "avstress/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "avstress/rng.hpp"

namespace avstress {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(IdmParams, v0, time_headway, jam_distance, a_max, b_comf, delta,
                                   b_hard)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MobilParams, politeness, b_safe, a_thr)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(NpcConfig, idm, mobil, v0_min, v0_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(KinematicsConfig, substeps, dt, speed_gain, accel_limit, v_max,
                                   speed_step, lookahead_time, min_lookahead, vehicle_length,
                                   vehicle_width, defender_speed, min_spawn_gap, horizon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GeometryConfig, lane_width, highway_lanes, highway_length,
                                   despawn_distance, merge_main_length, merge_junction,
                                   merge_lane_length, merge_lane_offset, roundabout_radius,
                                   roundabout_entry_length, capture_distance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PpoConfig, gamma, gae_lambda, clip_eps, value_clip, entropy_coef,
                                   actor_lr, critic_lr, epochs, minibatches, max_grad_norm,
                                   log_ratio_clamp)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AbstractionConfig, speed_levels, ttc_buckets, ttc_horizon, w_v,
                                   w_c, gamma, tol)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DefenderRewardConfig, w_v, w_c)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(D3qnConfig, hidden, replay_capacity, batch_size, epsilon_start,
                                   epsilon_end, epsilon_decay_steps, target_sync, gamma, total_steps,
                                   learning_starts, train_every, learning_rate, max_grad_norm,
                                   huber_delta)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PpoDefenderConfig, hidden, ppo, envs, rollout_len, total_steps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ShapingConfig, w_d, d_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalConfig, episodes, seeds, stochastic)

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string type_label(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

// Checks `value` against the type of `reference` and returns it converted to
// the reference representation, so equal configs serialize identically.
json coerce(const json& reference, const json& value, const std::string& path) {
  auto mismatch = [&](const std::string& want) {
    return ConfigError(path + ": expected " + want + ", got " + type_label(value));
  };
  if (reference.is_null()) {
    if (value.is_null() || value.is_string()) return value;
    throw mismatch("string or null");
  }
  if (reference.is_boolean()) {
    if (!value.is_boolean()) throw mismatch("boolean");
    return value;
  }
  if (reference.is_number_unsigned()) {
    if (!value.is_number_integer() || (value.is_number_integer() && !value.is_number_unsigned() &&
                                       value.get<std::int64_t>() < 0)) {
      throw mismatch("non-negative integer");
    }
    return value.get<std::uint64_t>();
  }
  if (reference.is_number_integer()) {
    if (!value.is_number_integer()) throw mismatch("integer");
    return value.get<std::int64_t>();
  }
  if (reference.is_number_float()) {
    if (!value.is_number()) throw mismatch("number");
    return value.get<double>();
  }
  if (reference.is_string()) {
    if (!value.is_string()) throw mismatch("string");
    return value;
  }
  if (reference.is_array()) {
    if (!value.is_array()) throw mismatch("array");
    json out = json::array();
    if (reference.empty()) return value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      out.push_back(coerce(reference[0], value[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  }
  if (!value.is_object()) throw mismatch("object");
  json out = reference;
  for (auto it = value.begin(); it != value.end(); ++it) {
    const std::string key_path = join(path, it.key());
    if (!reference.contains(it.key())) throw ConfigError(key_path + ": unknown key");
    out[it.key()] = coerce(reference[it.key()], it.value(), key_path);
  }
  return out;
}

json train_to_json(const AttackTrainConfig& t, int checkpoint_every, int trace_every) {
  json j = t.ppo;
  j["hidden"] = t.hidden;
  j["envs"] = t.envs;
  j["rollout_len"] = t.rollout_len;
  j["total_steps"] = t.total_steps;
  j["checkpoint_every"] = checkpoint_every;
  j["trace_every"] = trace_every;
  return j;
}

template <typename Fn>
void with_prefix(const std::string& prefix, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig default_config(ScenarioKind kind) {
  ExperimentConfig cfg;
  cfg.scenario = kind;
  cfg.sim = default_sim_config(kind);
  cfg.defender.abstraction = default_abstraction(kind);
  cfg.shaping = default_shaping(kind);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.n_attackers < 1 || cfg.n_attackers > 3) {
    throw ConfigError("n_attackers: must be in [1, 3], got " + std::to_string(cfg.n_attackers));
  }
  if (cfg.n_npcs < 0) throw ConfigError("n_npcs: must be >= 0");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  if (cfg.checkpoint_every < 1) throw ConfigError("train.checkpoint_every: must be >= 1");
  if (cfg.trace_every < 1) throw ConfigError("train.trace_every: must be >= 1");
  if (cfg.eval.episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
  if (cfg.eval.seeds.empty()) throw ConfigError("eval.seeds: must not be empty");
  if (cfg.defender.train_npcs < 0) throw ConfigError("defender.train_npcs: must be >= 0");
  with_prefix("har", [&] { validate(cfg.har); });
  with_prefix("shaping", [&] { validate(cfg.shaping); });
  with_prefix("train", [&] { validate(cfg.train); });
  with_prefix("defender.abstraction", [&] { validate(cfg.defender.abstraction); });
  with_prefix("defender.ppo", [&] { validate(cfg.defender.ppo.ppo); });
  with_prefix("simulation", [&] { validate(cfg.sim); });
  const D3qnConfig& d = cfg.defender.d3qn;
  if (d.batch_size < 1 || d.replay_capacity < 1 || d.target_sync < 1 || d.train_every < 1 ||
      d.total_steps < 0 || d.epsilon_decay_steps < 1 || !(d.learning_rate > 0.0) ||
      !(d.gamma >= 0.0 && d.gamma < 1.0)) {
    throw ConfigError("defender.d3qn: invalid settings");
  }
  const PpoDefenderConfig& p = cfg.defender.ppo;
  if (p.envs < 1 || p.rollout_len < 1 || p.total_steps < 0) {
    throw ConfigError("defender.ppo: invalid settings");
  }
  with_prefix("geometry", [&] { build_scenario(cfg.scenario, cfg.geometry).validate(); });
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["scenario"] = std::string(to_string(cfg.scenario));
  j["n_attackers"] = cfg.n_attackers;
  j["n_npcs"] = cfg.n_npcs;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  json d;
  d["type"] = std::string(to_string(cfg.defender.type));
  d["checkpoint"] = cfg.defender.checkpoint ? json(*cfg.defender.checkpoint) : json(nullptr);
  d["abstraction"] = cfg.defender.abstraction;
  d["reward"] = cfg.defender.reward;
  d["train_npcs"] = cfg.defender.train_npcs;
  d["d3qn"] = cfg.defender.d3qn;
  d["ppo"] = cfg.defender.ppo;
  j["defender"] = d;
  j["har"] = {{"phi", cfg.har.phi},
              {"rho", cfg.har.rho},
              {"lambda_accel", cfg.har.lambda_accel},
              {"mode", std::string(to_string(cfg.har.mode))}};
  j["shaping"] = cfg.shaping;
  j["train"] = train_to_json(cfg.train, cfg.checkpoint_every, cfg.trace_every);
  j["eval"] = cfg.eval;
  j["geometry"] = cfg.geometry;
  j["kinematics"] = cfg.sim.kinematics;
  j["npc"] = cfg.sim.npc;
  return j;
}

ExperimentConfig config_from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config: expected an object");
  ScenarioKind kind = ScenarioKind::Highway;
  if (user.contains("scenario")) {
    if (!user["scenario"].is_string()) throw ConfigError("scenario: expected string");
    with_prefix("scenario", [&] { kind = scenario_from_string(user["scenario"].get<std::string>()); });
  }
  const json j = coerce(to_json(default_config(kind)), user, "");

  ExperimentConfig cfg = default_config(kind);
  cfg.n_attackers = j["n_attackers"].get<int>();
  cfg.n_npcs = j["n_npcs"].get<int>();
  cfg.seed = j["seed"].get<std::uint64_t>();
  cfg.output_dir = j["output_dir"].get<std::string>();

  const json& d = j["defender"];
  with_prefix("defender.type", [&] { cfg.defender.type = defender_kind_from_string(d["type"].get<std::string>()); });
  if (!d["checkpoint"].is_null()) cfg.defender.checkpoint = d["checkpoint"].get<std::string>();
  cfg.defender.abstraction = d["abstraction"].get<AbstractionConfig>();
  cfg.defender.reward = d["reward"].get<DefenderRewardConfig>();
  cfg.defender.train_npcs = d["train_npcs"].get<int>();
  cfg.defender.d3qn = d["d3qn"].get<D3qnConfig>();
  cfg.defender.ppo = d["ppo"].get<PpoDefenderConfig>();

  const json& h = j["har"];
  cfg.har.phi = h["phi"].get<double>();
  cfg.har.rho = h["rho"].get<double>();
  cfg.har.lambda_accel = h["lambda_accel"].get<double>();
  with_prefix("har.mode", [&] { cfg.har.mode = reward_mode_from_string(h["mode"].get<std::string>()); });
  cfg.shaping = j["shaping"].get<ShapingConfig>();

  const json& t = j["train"];
  cfg.train.ppo = t.get<PpoConfig>();
  cfg.train.hidden = t["hidden"].get<std::vector<int>>();
  cfg.train.envs = t["envs"].get<int>();
  cfg.train.rollout_len = t["rollout_len"].get<int>();
  cfg.train.total_steps = t["total_steps"].get<std::int64_t>();
  cfg.checkpoint_every = t["checkpoint_every"].get<int>();
  cfg.trace_every = t["trace_every"].get<int>();

  cfg.eval = j["eval"].get<EvalConfig>();
  cfg.geometry = j["geometry"].get<GeometryConfig>();
  cfg.sim.kinematics = j["kinematics"].get<KinematicsConfig>();
  cfg.sim.npc = j["npc"].get<NpcConfig>();
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("eval");
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

std::uint64_t defender_hash(const ExperimentConfig& cfg) {
  const json full = to_json(cfg);
  json j;
  for (const char* key : {"scenario", "seed", "geometry", "kinematics", "npc"}) j[key] = full[key];
  j["defender"] = full["defender"];
  j["defender"].erase("checkpoint");
  return fnv1a64(j.dump());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace avstress
