#include "avstress/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace avstress {

using nlohmann::json;

namespace {

json vehicle_json(const TraceVehicle& v) {
  return {{"id", to_int(v.id)},     {"role", std::string(to_string(v.role))},
          {"lane", v.lane},         {"s", v.s},
          {"d", v.d},               {"x", v.x},
          {"y", v.y},               {"heading", v.heading},
          {"speed", v.speed},       {"length", v.length},
          {"width", v.width},       {"crashed", v.crashed},
          {"exited", v.exited}};
}

TraceVehicle vehicle_from(const json& j) {
  TraceVehicle v;
  v.id = VehicleId{j.at("id").get<std::int32_t>()};
  v.role = role_from_string(j.at("role").get<std::string>());
  v.lane = j.at("lane").get<std::string>();
  v.s = j.at("s").get<double>();
  v.d = j.at("d").get<double>();
  v.x = j.at("x").get<double>();
  v.y = j.at("y").get<double>();
  v.heading = j.at("heading").get<double>();
  v.speed = j.at("speed").get<double>();
  v.length = j.at("length").get<double>();
  v.width = j.at("width").get<double>();
  v.crashed = j.at("crashed").get<bool>();
  v.exited = j.at("exited").get<bool>();
  return v;
}

std::vector<TraceVehicle> vehicles_from(const json& j) {
  std::vector<TraceVehicle> out;
  for (const json& v : j) out.push_back(vehicle_from(v));
  return out;
}

json vehicles_json(const std::vector<TraceVehicle>& vs) {
  json out = json::array();
  for (const TraceVehicle& v : vs) out.push_back(vehicle_json(v));
  return out;
}

// Largest deviation between recorded and regenerated vehicles; infinity for
// structural differences (ids, roles, lanes, flags).
double deviation(const std::vector<TraceVehicle>& a, const std::vector<TraceVehicle>& b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const TraceVehicle& p = a[i];
    const TraceVehicle& q = b[i];
    if (p.id != q.id || p.role != q.role || p.lane != q.lane || p.crashed != q.crashed ||
        p.exited != q.exited) {
      return INFINITY;
    }
    for (double diff : {p.s - q.s, p.d - q.d, p.x - q.x, p.y - q.y, p.heading - q.heading,
                        p.speed - q.speed, p.length - q.length, p.width - q.width}) {
      // NaN compares false, so test the negation.
      if (!(std::abs(diff) <= worst)) worst = std::isnan(diff) ? INFINITY : std::abs(diff);
    }
  }
  return worst;
}

}  // namespace

std::vector<TraceVehicle> snapshot(const EnvState& state) {
  std::vector<TraceVehicle> out;
  out.reserve(state.vehicles.size());
  for (const Vehicle& v : state.vehicles) {
    TraceVehicle t;
    t.id = v.id;
    t.role = v.role;
    t.lane = state.road->lane(v.lane).name();
    t.s = v.s;
    t.d = v.d;
    t.x = v.position.x;
    t.y = v.position.y;
    t.heading = v.heading;
    t.speed = v.speed;
    t.length = v.length;
    t.width = v.width;
    t.crashed = v.crashed;
    t.exited = v.exited;
    out.push_back(std::move(t));
  }
  return out;
}

Trace make_trace(const ExperimentConfig& cfg, const EpisodeRecord& episode) {
  Trace t;
  t.config_hash = hash_hex(config_hash(cfg));
  t.config = to_json(cfg);
  t.scenario = cfg.scenario;
  t.reset_seed = episode.reset_seed;
  t.counts = episode.counts;
  t.initial = snapshot(episode.initial);
  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    const StepRecord& r = episode.steps[i];
    TraceStep s;
    s.index = static_cast<int>(i) + 1;
    s.actions = r.actions;
    s.rewards = r.rewards;
    s.events = r.events;
    s.vehicles = snapshot(r.state);
    s.terminal = r.state.terminal;
    s.terminal_reason = r.state.terminal_reason;
    t.steps.push_back(std::move(s));
  }
  return t;
}

json trace_to_json(const Trace& t) {
  json j;
  j["format"] = "avstress-trace";
  j["version"] = t.version;
  j["code_version"] = t.code_version;
  j["config_hash"] = t.config_hash;
  j["config"] = t.config;
  j["scenario"] = std::string(to_string(t.scenario));
  j["reset_seed"] = t.reset_seed;
  j["counts"] = {{"attackers", t.counts.attackers}, {"npcs", t.counts.npcs}};
  json roles = json::array();
  for (const TraceVehicle& v : t.initial) {
    roles.push_back({{"id", to_int(v.id)}, {"role", std::string(to_string(v.role))}});
  }
  j["roles"] = roles;
  j["initial"] = vehicles_json(t.initial);
  json steps = json::array();
  for (const TraceStep& s : t.steps) {
    json js;
    js["index"] = s.index;
    json actions = json::object();
    for (const auto& [id, a] : s.actions) actions[std::to_string(to_int(id))] = std::string(to_string(a));
    js["actions"] = actions;
    json rewards = json::object();
    for (const auto& [id, r] : s.rewards) {
      rewards[std::to_string(to_int(id))] = {{"r_c", r.r_c}, {"p_agg", r.p_agg}, {"r_d", r.r_d}};
    }
    js["rewards"] = rewards;
    json collisions = json::array();
    for (const auto& [a, b] : s.events.collisions) collisions.push_back({to_int(a), to_int(b)});
    json off_road = json::array();
    for (VehicleId id : s.events.off_road) off_road.push_back(to_int(id));
    js["events"] = {{"collisions", collisions},
                    {"defender_collision", s.events.defender_collision},
                    {"off_road", off_road}};
    js["vehicles"] = vehicles_json(s.vehicles);
    js["terminal"] = s.terminal;
    js["terminal_reason"] =
        s.terminal_reason ? json(std::string(to_string(*s.terminal_reason))) : json(nullptr);
    steps.push_back(std::move(js));
  }
  j["steps"] = steps;
  return j;
}

Trace trace_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "avstress-trace") {
      throw IntegrityError("not an avstress trace");
    }
    Trace t;
    t.version = j.at("version").get<int>();
    if (t.version != kTraceVersion) {
      throw IntegrityError("trace schema version " + std::to_string(t.version) +
                           " is not supported (expected " + std::to_string(kTraceVersion) + ")");
    }
    t.code_version = j.at("code_version").get<std::string>();
    t.config_hash = j.at("config_hash").get<std::string>();
    t.config = j.at("config");
    t.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    t.reset_seed = j.at("reset_seed").get<std::uint64_t>();
    t.counts = {j.at("counts").at("attackers").get<int>(), j.at("counts").at("npcs").get<int>()};
    t.initial = vehicles_from(j.at("initial"));
    for (const json& js : j.at("steps")) {
      TraceStep s;
      s.index = js.at("index").get<int>();
      for (const auto& [key, a] : js.at("actions").items()) {
        s.actions[VehicleId{std::stoi(key)}] = action_from_string(a.get<std::string>());
      }
      for (const auto& [key, r] : js.at("rewards").items()) {
        s.rewards[VehicleId{std::stoi(key)}] = {r.at("r_c").get<double>(), r.at("p_agg").get<double>(),
                                                r.at("r_d").get<double>()};
      }
      const json& ev = js.at("events");
      for (const json& pair : ev.at("collisions")) {
        s.events.collisions.emplace_back(VehicleId{pair.at(0).get<std::int32_t>()},
                                         VehicleId{pair.at(1).get<std::int32_t>()});
      }
      s.events.defender_collision = ev.at("defender_collision").get<bool>();
      for (const json& id : ev.at("off_road")) s.events.off_road.push_back(VehicleId{id.get<std::int32_t>()});
      s.vehicles = vehicles_from(js.at("vehicles"));
      s.terminal = js.at("terminal").get<bool>();
      if (!js.at("terminal_reason").is_null()) {
        s.terminal_reason = terminal_reason_from_string(js.at("terminal_reason").get<std::string>());
      }
      t.steps.push_back(std::move(s));
    }
    return t;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed trace: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("malformed trace: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IntegrityError(std::string("malformed trace: ") + e.what());
  }
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ArtifactError(path.string() + ": cannot write trace");
  out << trace_to_json(trace).dump(1) << '\n';
  if (!out) throw ArtifactError(path.string() + ": write failed");
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError(path.string() + ": trace not found");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
  return trace_from_json(j);
}

ReplayResult replay_trace(const Trace& trace, double tol, std::ostream* log) {
  ReplayResult result;
  result.code_version_mismatch = trace.code_version != kCodeVersion;
  if (result.code_version_mismatch && log) {
    *log << "warning: trace was written by code version " << trace.code_version
         << ", replaying with " << kCodeVersion << '\n';
  }
  ExperimentConfig cfg;
  try {
    cfg = config_from_json(trace.config);
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("trace config is invalid: ") + e.what());
  }
  if (hash_hex(config_hash(cfg)) != trace.config_hash) {
    throw IntegrityError("trace config does not match its recorded hash");
  }
  const Simulator sim(std::make_shared<const RoadNetwork>(build_scenario(cfg.scenario, cfg.geometry)),
                      cfg.sim);
  EnvState state = sim.reset(trace.counts, trace.reset_seed);
  auto check = [&](const std::vector<TraceVehicle>& recorded, int index) {
    const double dev = deviation(recorded, snapshot(state));
    result.max_deviation = std::max(result.max_deviation, dev);
    if (!(dev <= tol)) {
      throw IntegrityError("replay diverged at step " + std::to_string(index) + " (deviation " +
                           std::to_string(dev) + ")");
    }
  };
  check(trace.initial, 0);
  for (const TraceStep& s : trace.steps) {
    if (state.terminal) {
      throw IntegrityError("replay diverged at step " + std::to_string(s.index) +
                           " (episode already terminal)");
    }
    state = sim.step(state, s.actions).state;
    check(s.vehicles, s.index);
    if (state.terminal != s.terminal || state.terminal_reason != s.terminal_reason) {
      throw IntegrityError("replay diverged at step " + std::to_string(s.index) +
                           " (terminal status)");
    }
    ++result.steps_checked;
    if (log) {
      *log << "step " << std::setw(3) << s.index;
      for (const TraceVehicle& v : s.vehicles) {
        if (v.exited) continue;
        *log << "  " << to_string(v.role)[0] << to_int(v.id) << "(" << v.lane << " s=" << std::fixed
             << std::setprecision(1) << v.s << " v=" << v.speed << (v.crashed ? " X" : "") << ")";
      }
      if (s.events.defender_collision) *log << "  DEFENDER COLLISION";
      if (s.terminal_reason) *log << "  [" << to_string(*s.terminal_reason) << "]";
      *log << '\n';
      log->unsetf(std::ios::floatfield);
    }
  }
  return result;
}

}  // namespace avstress
