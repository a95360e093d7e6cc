// Command-line front end: lfcal <simulate|detect|calibrate|evaluate> [options]

#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "lfcal/error.hpp"
#include "lfcal/pipeline.hpp"

namespace {

int run(const std::string& command, lfcal::Json config, const std::vector<std::string>& overrides,
        const std::string& output_dir) {
  if (const char* env = std::getenv("LFCAL_OUTPUT_DIR"); env && *env) config["output_dir"] = env;
  if (!output_dir.empty()) config["output_dir"] = output_dir;
  for (const auto& o : overrides) lfcal::apply_override(config, o);
  const lfcal::PipelineConfig cfg = lfcal::parse_config(config);
  if (command == "simulate") return lfcal::cmd_simulate(cfg, std::cout);
  if (command == "detect") return lfcal::cmd_detect(cfg, std::cout);
  if (command == "calibrate") return lfcal::cmd_calibrate(cfg, std::cout);
  return lfcal::cmd_evaluate(cfg, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-field camera calibration: simulate, detect, calibrate, evaluate"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::vector<std::string> overrides;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "render the configured poses and write ground-truth sidecars"},
      {"detect", "detect LF corners in every manifest image"},
      {"calibrate", "two-step calibration from the corner files"},
      {"evaluate", "P2RE, P2PE and RDE of the calibration"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "JSON configuration file");
    sub->add_option("-o,--output-dir", output_dir, "artifact directory (overrides config and LFCAL_OUTPUT_DIR)");
    sub->add_option("-s,--set", overrides, "override a config key, e.g. render.noise_sigma=0.01");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lfcal::kExitInvalid;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    lfcal::Json config = config_path.empty() ? lfcal::default_config() : lfcal::load_config(config_path);
    return run(command, std::move(config), overrides, output_dir);
  } catch (const lfcal::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case lfcal::ErrorCode::InvalidArgument:
      case lfcal::ErrorCode::Io:
      case lfcal::ErrorCode::BehindCamera:
      case lfcal::ErrorCode::IndexOutOfRange:
        return lfcal::kExitInvalid;
      default:
        return lfcal::kExitPartial;
    }
  } catch (const lfcal::Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lfcal::kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lfcal::kExitPartial;
  }
}
