#include "lfcal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "lfcal/error.hpp"
#include "lfcal/image_io.hpp"
#include "lfcal/metrics.hpp"
#include "lfcal/parallel.hpp"

namespace lfcal {

namespace fs = std::filesystem;

namespace {

Error invalid(const std::string& what) { return Error(ErrorCode::InvalidArgument, what); }

template <class T>
void read_key(const Json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

Json detector_to_json(const DetectorOptions& o) {
  return {{"radius", o.radius},
          {"strip_half_width", o.strip_half_width},
          {"profile", o.profile == TemplateProfile::PixelArea ? "pixel_area" : "linear_ramp"},
          {"min_window_contrast", o.min_window_contrast},
          {"endpoint_margin_scale", o.endpoint_margin_scale},
          {"lambda_min", o.lambda_min},
          {"lambda_max", o.lambda_max},
          {"lambda_step", o.lambda_step},
          {"step_px", o.step_px},
          {"step_lambda", o.step_lambda},
          {"contraction", o.contraction},
          {"tol_px", o.tol_px},
          {"tol_lambda", o.tol_lambda},
          {"max_iterations", o.max_iterations},
          {"restarts", o.restarts},
          {"residual_threshold", o.residual_threshold},
          {"min_mean_ncc", o.min_mean_ncc},
          {"min_terms", o.min_terms}};
}

DetectorOptions detector_from_json(const Json& j) {
  DetectorOptions o;
  read_key(j, "radius", o.radius);
  read_key(j, "strip_half_width", o.strip_half_width);
  if (j.contains("profile")) {
    const auto p = j.at("profile").get<std::string>();
    if (p == "pixel_area") {
      o.profile = TemplateProfile::PixelArea;
    } else if (p == "linear_ramp") {
      o.profile = TemplateProfile::LinearRamp;
    } else {
      throw invalid("unknown detector profile '" + p + "'");
    }
  }
  read_key(j, "min_window_contrast", o.min_window_contrast);
  read_key(j, "endpoint_margin_scale", o.endpoint_margin_scale);
  read_key(j, "lambda_min", o.lambda_min);
  read_key(j, "lambda_max", o.lambda_max);
  read_key(j, "lambda_step", o.lambda_step);
  read_key(j, "step_px", o.step_px);
  read_key(j, "step_lambda", o.step_lambda);
  read_key(j, "contraction", o.contraction);
  read_key(j, "tol_px", o.tol_px);
  read_key(j, "tol_lambda", o.tol_lambda);
  read_key(j, "max_iterations", o.max_iterations);
  read_key(j, "restarts", o.restarts);
  read_key(j, "residual_threshold", o.residual_threshold);
  read_key(j, "min_mean_ncc", o.min_mean_ncc);
  read_key(j, "min_terms", o.min_terms);
  if (!(o.lambda_max > o.lambda_min) || !(o.lambda_step > 0)) {
    throw invalid("detector lambda sweep needs lambda_max > lambda_min and lambda_step > 0");
  }
  return o;
}

struct ManifestEntry {
  std::string name;
  fs::path image;
  fs::path sidecar;  ///< empty when absent
};

fs::path manifest_path(const PipelineConfig& cfg) {
  return cfg.manifest.empty() ? cfg.output_dir / "manifest.json" : cfg.manifest;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "manifest not found: " + path.string());
  const Json j = read_json(path);
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  for (const auto& e : j.at("images")) {
    ManifestEntry m;
    m.image = base / e.at("image").get<std::string>();
    m.name = e.contains("name") ? e.at("name").get<std::string>() : m.image.stem().string();
    if (e.contains("sidecar")) m.sidecar = base / e.at("sidecar").get<std::string>();
    out.push_back(m);
  }
  return out;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::Io, "missing input: " + p.string());
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

MicroLensGrid resolve_grid(const PipelineConfig& cfg) {
  if (cfg.grid) return *cfg.grid;
  if (cfg.white_image.empty()) throw invalid("config needs grid or white_image");
  const RawImage white = read_image(cfg.white_image);
  return estimate_grid_from_white_image(white, GridLayout::Rectangular).grid;
}

struct DetectionEntry {
  std::string name;
  fs::path corners;
  std::string error;
};

std::vector<DetectionEntry> read_detections(const fs::path& out_dir) {
  const fs::path p = out_dir / "detections.json";
  require_file(p);
  const Json j = read_json(p);
  std::vector<DetectionEntry> out;
  for (const auto& e : j.at("images")) {
    DetectionEntry d;
    d.name = e.at("name").get<std::string>();
    if (e.contains("corners")) d.corners = out_dir / e.at("corners").get<std::string>();
    if (e.contains("error")) d.error = e.at("error").get<std::string>();
    out.push_back(d);
  }
  return out;
}

}  // namespace

Json default_config() {
  const RenderConfig r;
  return {{"output_dir", "out"},
          {"manifest", ""},
          {"seed", 1},
          {"threads", 0},
          {"board", board_to_json(CheckerboardSpec{})},
          {"render",
           {{"samples_per_pixel", r.samples_per_pixel},
            {"edge_samples_per_pixel", r.edge_samples_per_pixel},
            {"aperture_samples", r.aperture_samples},
            {"noise_sigma", r.noise_sigma},
            {"black", r.black},
            {"white", r.white},
            {"background", r.background},
            {"distortion", distortion_to_json(DistortionCoeffs{})}}},
          {"detector", detector_to_json(DetectorOptions{})},
          {"refine",
           {{"max_iterations", RefineOptions{}.max_iterations},
            {"relative_tolerance", RefineOptions{}.relative_tolerance}}},
          {"poses", Json::array()}};
}

Json load_config(const fs::path& path) {
  require_file(path);
  Json cfg = default_config();
  cfg.merge_patch(read_json(path));
  return cfg;
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw invalid("override must be key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::exception&) {
    value = text;
  }
  std::string pointer = "/";
  for (char c : key) pointer += c == '.' ? '/' : c;
  config[Json::json_pointer(pointer)] = value;
}

std::string config_hash(const Json& config) {
  Json c = config;
  c.erase("output_dir");
  c.erase("threads");
  return fnv1a_hex(c.dump());
}

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

PipelineConfig parse_config(const Json& j) {
  PipelineConfig cfg;
  try {
    cfg.raw = j;
    cfg.output_dir = j.value("output_dir", std::string("out"));
    const std::string manifest = j.value("manifest", std::string());
    if (!manifest.empty()) cfg.manifest = manifest;
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.threads = j.value("threads", 0);
    if (j.contains("board")) cfg.board = board_from_json(j.at("board"));
    if (j.contains("camera")) cfg.camera = physical_from_json(j.at("camera"));
    if (j.contains("sensor")) {
      cfg.width = j.at("sensor").at("width").get<int>();
      cfg.height = j.at("sensor").at("height").get<int>();
    }
    if (j.contains("grid")) cfg.grid = grid_from_json(j.at("grid"));
    const std::string white = j.value("white_image", std::string());
    if (!white.empty()) cfg.white_image = white;

    RenderConfig& r = cfg.render;
    if (j.contains("render")) {
      const Json& rj = j.at("render");
      read_key(rj, "samples_per_pixel", r.samples_per_pixel);
      read_key(rj, "edge_samples_per_pixel", r.edge_samples_per_pixel);
      read_key(rj, "aperture_samples", r.aperture_samples);
      read_key(rj, "noise_sigma", r.noise_sigma);
      read_key(rj, "black", r.black);
      read_key(rj, "white", r.white);
      read_key(rj, "background", r.background);
      if (rj.contains("distortion")) r.distortion = distortion_from_json(rj.at("distortion"));
    }
    if (cfg.camera) r.cam = *cfg.camera;
    if (cfg.grid) r.grid = *cfg.grid;
    r.width = cfg.width;
    r.height = cfg.height;
    r.threads = cfg.threads;

    if (j.contains("poses")) {
      for (const auto& p : j.at("poses")) cfg.poses.push_back(pose_from_json(p));
    }
    cfg.detector = detector_from_json(j.value("detector", Json::object()));
    if (j.contains("refine")) {
      read_key(j.at("refine"), "max_iterations", cfg.refine.max_iterations);
      read_key(j.at("refine"), "relative_tolerance", cfg.refine.relative_tolerance);
    }
  } catch (const Json::exception& e) {
    throw invalid(std::string("config: ") + e.what());
  }
  return cfg;
}

int cmd_simulate(const PipelineConfig& cfg, std::ostream& log) {
  if (!cfg.camera) throw invalid("simulate needs a camera");
  if (!cfg.grid) throw invalid("simulate needs an explicit grid");
  if (cfg.poses.empty()) throw invalid("simulate needs at least one pose");
  cfg.render.validate();
  std::vector<SceneBoard> boards;
  for (size_t k = 0; k < cfg.poses.size(); ++k) {
    SceneBoard b{cfg.board, cfg.poses[k]};
    try {
      b.validate();
    } catch (const Error& e) {
      throw Error(e.code(), "pose " + std::to_string(k) + ": " + e.what());
    }
    boards.push_back(b);
  }

  const std::string hash = config_hash(cfg.raw);
  Json manifest = {{"config_hash", hash}, {"images", Json::array()}};
  for (size_t k = 0; k < boards.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu", k);
    const std::string image_rel = std::string("images/") + name + ".png";
    const std::string sidecar_rel = std::string("images/") + name + ".json";

    RenderConfig rc = cfg.render;
    rc.noise_sigma = 0.0;
    RawImage img = render(boards[k], rc);
    if (cfg.render.noise_sigma > 0) {
      add_noise(img, cfg.render.noise_sigma, image_seed(cfg.seed, k), cfg.threads);
    }
    const fs::path image_path = cfg.output_dir / image_rel;
    fs::create_directories(image_path.parent_path());
    fs::path tmp = image_path;
    tmp += ".tmp.png";
    write_image(tmp, img);
    fs::rename(tmp, image_path);

    GroundTruth gt;
    gt.image = image_rel;
    gt.pose = boards[k].pose;
    gt.camera = *cfg.camera;
    gt.distortion = cfg.render.distortion;
    gt.board = cfg.board;
    gt.corners = analytic_corner_lf_points(boards[k], *cfg.camera, cfg.render.distortion);
    Json sidecar = ground_truth_to_json(gt);
    sidecar["config_hash"] = hash;
    write_file_atomic(cfg.output_dir / sidecar_rel, dump(sidecar));

    manifest["images"].push_back({{"name", name}, {"image", image_rel}, {"sidecar", sidecar_rel}});
    log << "rendered " << image_rel << "\n";
  }
  write_file_atomic(cfg.output_dir / "manifest.json", dump(manifest));
  return kExitOk;
}

int cmd_detect(const PipelineConfig& cfg, std::ostream& log) {
  const auto entries = read_manifest(manifest_path(cfg));
  for (const auto& e : entries) require_file(e.image);
  if (!cfg.grid && !cfg.white_image.empty()) require_file(cfg.white_image);
  const MicroLensGrid grid = resolve_grid(cfg);

  DetectorOptions opt = cfg.detector;
  opt.threads = 1;
  std::vector<DetectedBoard> boards(entries.size());
  std::vector<std::string> errors(entries.size());
  parallel_for(
      entries.size(),
      [&](std::size_t k) {
        try {
          const RawImage raw = read_image(entries[k].image);
          boards[k] = detect_board(raw, grid, cfg.board, opt);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::Io) throw;
          errors[k] = e.what();
        }
      },
      cfg.threads);

  const std::string hash = config_hash(cfg.raw);
  Json summary = {{"config_hash", hash}, {"images", Json::array()}};
  int failed = 0;
  for (size_t k = 0; k < entries.size(); ++k) {
    Json e = {{"name", entries[k].name}};
    if (!errors[k].empty()) {
      ++failed;
      e["error"] = errors[k];
      log << entries[k].name << ": detection failed: " << errors[k] << "\n";
    } else {
      const std::string rel = "corners/" + entries[k].name + ".json";
      Json c = detection_to_json(boards[k]);
      c["config_hash"] = hash;
      c["image"] = entries[k].name;
      write_file_atomic(cfg.output_dir / rel, dump(c));
      e["corners"] = rel;
      e["valid"] = boards[k].valid_count();
      log << entries[k].name << ": " << boards[k].valid_count() << "/"
          << boards[k].corners.size() << " corners valid\n";
    }
    summary["images"].push_back(e);
  }
  write_file_atomic(cfg.output_dir / "detections.json", dump(summary));
  return !entries.empty() && failed == static_cast<int>(entries.size()) ? kExitPartial : kExitOk;
}

int cmd_calibrate(const PipelineConfig& cfg, std::ostream& log) {
  const auto dets = read_detections(cfg.output_dir);
  for (const auto& d : dets) {
    if (d.error.empty()) require_file(d.corners);
  }
  std::vector<DetectedBoard> boards;
  std::vector<std::string> names;
  Json excluded = Json::array();
  for (const auto& d : dets) {
    if (!d.error.empty()) {
      excluded.push_back({{"name", d.name}, {"reason", d.error}});
      continue;
    }
    DetectedBoard b = detection_from_json(read_json(d.corners));
    if (b.valid_count() < 4) {
      excluded.push_back({{"name", d.name}, {"reason", "fewer than 4 valid corners"}});
      continue;
    }
    boards.push_back(std::move(b));
    names.push_back(d.name);
  }
  CalibrationResult res;
  try {
    res = calibrate_full(boards, cfg.board, cfg.refine);
  } catch (const Error& e) {
    log << "calibration failed: " << e.what() << "\n";
    return kExitPartial;
  }
  Json out = calibration_to_json(res, names);
  out["config_hash"] = config_hash(cfg.raw);
  out["excluded"] = excluded;
  write_file_atomic(cfg.output_dir / "calibration.json", dump(out));

  char line[256];
  log << "      fx          fy          cx          cy          K1          K2    RMS reproj\n";
  std::snprintf(line, sizeof line, "%10.4f  %10.4f  %10.4f  %10.4f  %10.6f  %10.4f  %10.6f\n",
                res.intrinsics.f_x, res.intrinsics.f_y, res.intrinsics.c_x, res.intrinsics.c_y,
                res.intrinsics.K1, res.intrinsics.K2, res.rms_reprojection);
  log << line;
  if (res.ill_conditioned) log << "warning: pose set is poorly conditioned for the intrinsics\n";
  if (res.refine_diverged) log << "warning: refinement stopped without converging\n";
  return excluded.empty() ? kExitOk : kExitPartial;
}

int cmd_evaluate(const PipelineConfig& cfg, std::ostream& log) {
  const fs::path calib_path = cfg.output_dir / "calibration.json";
  require_file(calib_path);
  const auto dets = read_detections(cfg.output_dir);
  std::vector<std::string> names;
  const CalibrationResult calib = calibration_from_json(read_json(calib_path), &names);

  std::vector<DetectedBoard> boards;
  for (const auto& name : names) {
    auto it = std::find_if(dets.begin(), dets.end(), [&](const auto& d) { return d.name == name; });
    if (it == dets.end() || !it->error.empty()) {
      throw Error(ErrorCode::Io, "no corner file for calibrated image " + name);
    }
    require_file(it->corners);
    boards.push_back(detection_from_json(read_json(it->corners)));
  }

  // Sidecars are optional; they add ground-truth comparisons.
  std::vector<std::optional<GroundTruth>> truth(names.size());
  const fs::path mpath = manifest_path(cfg);
  if (fs::exists(mpath)) {
    for (const auto& e : read_manifest(mpath)) {
      auto it = std::find(names.begin(), names.end(), e.name);
      if (it == names.end() || e.sidecar.empty() || !fs::exists(e.sidecar)) continue;
      truth[static_cast<size_t>(it - names.begin())] = ground_truth_from_json(read_json(e.sidecar));
    }
  }

  const EvaluationReport rep = evaluate(boards, cfg.board, calib);
  Json out = metrics_to_json(rep);
  out["config_hash"] = config_hash(cfg.raw);
  Json images = Json::array();
  for (const auto& n : names) images.push_back(n);
  out["images"] = images;

  const bool have_truth = std::all_of(truth.begin(), truth.end(), [](const auto& t) { return t.has_value(); });
  if (have_truth && !truth.empty()) {
    double lateral = 0, lateral2 = 0, dlambda = 0;
    int valid = 0, total = 0;
    for (size_t k = 0; k < boards.size(); ++k) {
      for (const auto& c : boards[k].corners) {
        ++total;
        if (!c.valid) continue;
        const LFPoint& g = truth[k]->corners[static_cast<size_t>(c.i * boards[k].cols + c.j)];
        const double e = std::hypot(c.point.x_c_sub - g.x_c_sub, c.point.y_c_sub - g.y_c_sub);
        lateral += e;
        lateral2 += e * e;
        dlambda += std::abs(c.point.lambda - g.lambda);
        ++valid;
      }
    }
    const SarbIntrinsics t = sarb_from_physical(truth[0]->camera);
    const SarbIntrinsics& c = calib.intrinsics;
    out["ground_truth"] = {
        {"valid_fraction", total ? static_cast<double>(valid) / total : 0.0},
        {"lateral_mean_px", valid ? lateral / valid : 0.0},
        {"lateral_rms_px", valid ? std::sqrt(lateral2 / valid) : 0.0},
        {"lambda_mean_abs", valid ? dlambda / valid : 0.0},
        {"fx_rel", std::abs(c.f_x - t.f_x) / std::abs(t.f_x)},
        {"fy_rel", std::abs(c.f_y - t.f_y) / std::abs(t.f_y)},
        {"cx_px", std::abs(c.c_x - t.c_x)},
        {"cy_px", std::abs(c.c_y - t.c_y)},
        {"K1_abs", std::abs(c.K1 - t.K1)},
        {"K2_rel", std::abs(c.K2 - t.K2) / std::abs(t.K2)}};
  }

  write_file_atomic(cfg.output_dir / "metrics.json", dump(out));
  write_file_atomic(cfg.output_dir / "metrics.csv", metrics_to_csv(rep, names));

  char line[256];
  std::snprintf(line, sizeof line,
                "corners %d  P2RE mean %.6f rms %.6f mm  P2PE mean %.6f rms %.6f mm  RDE mean "
                "%.4f%% rms %.4f%%\n",
                rep.overall.count, rep.overall.p2re_mean, rep.overall.p2re_rms,
                rep.overall.p2pe_mean, rep.overall.p2pe_rms, 100 * rep.overall.rde_mean,
                100 * rep.overall.rde_rms);
  log << line;
  return kExitOk;
}

}  // namespace lfcal
