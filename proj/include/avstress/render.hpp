#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "avstress/trace.hpp"

namespace avstress {

// SVG markup for one trace step (1-based index into trace.steps).
std::string render_frame(const Trace& trace, const RoadNetwork& road, int step);

// Writes step_0001.svg ... one file per recorded step and returns the paths.
// Throws ArtifactError when the directory cannot be written.
std::vector<std::filesystem::path> render_trace(const Trace& trace,
                                                const std::filesystem::path& out_dir);

}  // namespace avstress
