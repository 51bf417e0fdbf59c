#include "avstress/render.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace avstress {

namespace {

constexpr double kViewWidth = 200.0;
constexpr double kViewHeight = 120.0;
constexpr double kSampleSpacing = 5.0;

// Fixed precision keeps the output byte-stable.
std::string num(double v) {
  char buf[32];
  // Adding zero turns -0 into +0 so it never prints as "-0.00".
  std::snprintf(buf, sizeof buf, "%.2f", v + 0.0);
  return buf;
}

// SVG y grows downward; the road frame's y grows upward.
std::string pt(Vec2 p) { return num(p.x) + "," + num(-p.y); }

std::string lane_path(const Lane& lane, double d) {
  const int n = std::max(2, static_cast<int>(std::ceil(lane.length() / kSampleSpacing)) + 1);
  std::string out;
  for (int i = 0; i < n; ++i) {
    const double s = lane.length() * i / (n - 1);
    out += (i ? " " : "") + pt(lane.to_world(s, d).position);
  }
  return out;
}

void draw_vehicle(std::ostream& svg, const TraceVehicle& v) {
  const Vec2 c{v.x, v.y};
  const Vec2 f = unit_from_angle(v.heading);
  const Vec2 l{-f.y, f.x};
  const double hl = v.length / 2, hw = v.width / 2;
  const Vec2 corners[4] = {
      {c.x + f.x * hl + l.x * hw, c.y + f.y * hl + l.y * hw},
      {c.x - f.x * hl + l.x * hw, c.y - f.y * hl + l.y * hw},
      {c.x - f.x * hl - l.x * hw, c.y - f.y * hl - l.y * hw},
      {c.x + f.x * hl - l.x * hw, c.y + f.y * hl - l.y * hw},
  };
  std::string points;
  for (int i = 0; i < 4; ++i) points += (i ? " " : "") + pt(corners[i]);
  std::string style;
  switch (v.role) {
    case Role::Defender: style = "fill=\"#d62728\" stroke=\"#000000\" stroke-width=\"0.3\""; break;
    case Role::Attacker: style = "fill=\"#1f1f1f\" stroke=\"#ffffff\" stroke-width=\"0.5\""; break;
    case Role::Npc: style = "fill=\"#2ca02c\" stroke=\"#000000\" stroke-width=\"0.3\""; break;
  }
  svg << "  <polygon class=\"vehicle " << to_string(v.role) << "\" data-id=\"" << to_int(v.id)
      << "\" points=\"" << points << "\" " << style << (v.crashed ? " opacity=\"0.6\"" : "")
      << "/>\n";
}

}  // namespace

std::string render_frame(const Trace& trace, const RoadNetwork& road, int step) {
  if (step < 1 || step > static_cast<int>(trace.steps.size())) {
    throw RangeError("render step " + std::to_string(step) + " is outside the trace");
  }
  const TraceStep& ts = trace.steps[static_cast<std::size_t>(step - 1)];
  Vec2 focus{};
  for (const TraceVehicle& v : ts.vehicles) {
    if (v.role == Role::Defender) focus = {v.x, v.y};
  }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << num(focus.x - kViewWidth / 2)
      << " " << num(-focus.y - kViewHeight / 2) << " " << num(kViewWidth) << " " << num(kViewHeight)
      << "\" width=\"1000\" height=\"600\">\n";
  svg << "  <rect x=\"" << num(focus.x - kViewWidth / 2) << "\" y=\"" << num(-focus.y - kViewHeight / 2)
      << "\" width=\"" << num(kViewWidth) << "\" height=\"" << num(kViewHeight)
      << "\" fill=\"#6e6e6e\"/>\n";
  for (const Lane& lane : road.lanes()) {
    const double hw = lane.width() / 2;
    svg << "  <polyline class=\"lane-surface\" points=\"" << lane_path(lane, 0.0)
        << "\" fill=\"none\" stroke=\"#3a3a3a\" stroke-width=\"" << num(lane.width()) << "\"/>\n";
    for (double d : {-hw, hw}) {
      svg << "  <polyline class=\"lane-edge\" points=\"" << lane_path(lane, d)
          << "\" fill=\"none\" stroke=\"#e0e0e0\" stroke-width=\"0.15\" stroke-dasharray=\"3,3\"/>\n";
    }
  }
  for (const TraceVehicle& v : ts.vehicles) {
    if (!v.exited) draw_vehicle(svg, v);
  }
  for (const auto& [a, b] : ts.events.collisions) {
    Vec2 pa{}, pb{};
    for (const TraceVehicle& v : ts.vehicles) {
      if (v.id == a) pa = {v.x, v.y};
      if (v.id == b) pb = {v.x, v.y};
    }
    const Vec2 mid{(pa.x + pb.x) / 2, (pa.y + pb.y) / 2};
    svg << "  <circle class=\"collision-marker\" cx=\"" << num(mid.x) << "\" cy=\"" << num(-mid.y)
        << "\" r=\"4.00\" fill=\"none\" stroke=\"#ffd700\" stroke-width=\"0.8\"/>\n";
  }
  svg << "  <text x=\"" << num(focus.x - kViewWidth / 2 + 2) << "\" y=\"" << num(-focus.y - kViewHeight / 2 + 6)
      << "\" font-size=\"4\" fill=\"#ffffff\">step " << ts.index;
  if (ts.terminal_reason) svg << " " << to_string(*ts.terminal_reason);
  svg << "</text>\n</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> render_trace(const Trace& trace,
                                                const std::filesystem::path& out_dir) {
  ExperimentConfig cfg;
  try {
    cfg = config_from_json(trace.config);
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("trace config is invalid: ") + e.what());
  }
  const RoadNetwork road = build_scenario(cfg.scenario, cfg.geometry);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ArtifactError(out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (int i = 1; i <= static_cast<int>(trace.steps.size()); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%04d.svg", i);
    const std::filesystem::path path = out_dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArtifactError(path.string() + ": cannot write frame");
    out << render_frame(trace, road, i);
    if (!out) throw ArtifactError(path.string() + ": write failed");
    written.push_back(path);
  }
  return written;
}

}  // namespace avstress
