#pragma once

// Batch pipeline behind the command-line tool: simulate, detect, calibrate
// and evaluate over a directory of artifacts. Every command reads the
// effective configuration and embeds its hash in what it writes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lfcal/calibrate.hpp"
#include "lfcal/corner_detect.hpp"
#include "lfcal/formats.hpp"
#include "lfcal/synthetic_renderer.hpp"

namespace lfcal {

enum ExitCode { kExitOk = 0, kExitPartial = 1, kExitInvalid = 2 };

struct PipelineConfig {
  Json raw;  ///< effective configuration
  std::filesystem::path output_dir;
  std::filesystem::path manifest;  ///< empty: <output_dir>/manifest.json
  std::uint64_t seed = 1;
  int threads = 0;

  CheckerboardSpec board;
  std::optional<PhysicalCameraParams> camera;
  int width = 0, height = 0;
  std::optional<MicroLensGrid> grid;
  std::filesystem::path white_image;
  RenderConfig render;  ///< cam, grid and size filled when present
  std::vector<Pose> poses;
  DetectorOptions detector;
  RefineOptions refine;
};

Json default_config();

/// Defaults merged with the file (JSON merge patch).
Json load_config(const std::filesystem::path& path);

/// "a.b.c=value"; value is parsed as JSON and taken as a string otherwise.
void apply_override(Json& config, const std::string& assignment);

/// Throws InvalidArgument on malformed values.
PipelineConfig parse_config(const Json& config);

/// Hash of everything that affects outputs (not output_dir or threads).
std::string config_hash(const Json& config);

/// Per-image noise seed derived from the run seed.
std::uint64_t image_seed(std::uint64_t seed, std::size_t index);

int cmd_simulate(const PipelineConfig& cfg, std::ostream& log);
int cmd_detect(const PipelineConfig& cfg, std::ostream& log);
int cmd_calibrate(const PipelineConfig& cfg, std::ostream& log);
int cmd_evaluate(const PipelineConfig& cfg, std::ostream& log);

}  // namespace lfcal
