#include "lfcal/formats.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "lfcal/error.hpp"

namespace lfcal {

namespace fs = std::filesystem;

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::Io, "cannot rename to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::vector<double> matrix_row_major(const Eigen::Matrix3d& R) {
  std::vector<double> v;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v.push_back(R(r, c));
  return v;
}

Eigen::Vector3d vec3(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " needs 3 values");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Json pose_to_json(const Pose& p) {
  return {{"R", matrix_row_major(p.R)}, {"T", {p.T.x(), p.T.y(), p.T.z()}}};
}

Pose pose_from_json(const Json& j) {
  Pose p;
  if (j.contains("R")) {
    const auto& r = j.at("R");
    if (!r.is_array() || r.size() != 9) {
      throw Error(ErrorCode::InvalidArgument, "pose R needs 9 values");
    }
    for (int k = 0; k < 9; ++k) p.R(k / 3, k % 3) = r[k].get<double>();
  } else if (j.contains("rvec")) {
    p.R = rotation_from_axis_angle(vec3(j.at("rvec"), "pose rvec"));
  } else {
    throw Error(ErrorCode::InvalidArgument, "pose needs R or rvec");
  }
  p.T = vec3(j.at("T"), "pose T");
  return p;
}

Json grid_to_json(const MicroLensGrid& g) {
  return {{"layout", g.layout == GridLayout::Hexagonal ? "hexagonal" : "rectangular"},
          {"pitch", g.pitch},
          {"rotation", g.rotation},
          {"origin", {g.origin.x(), g.origin.y()}},
          {"rows", g.rows},
          {"cols", g.cols}};
}

MicroLensGrid grid_from_json(const Json& j) {
  MicroLensGrid g;
  const std::string layout = get_or<std::string>(j, "layout", "rectangular");
  if (layout == "hexagonal") {
    g.layout = GridLayout::Hexagonal;
  } else if (layout != "rectangular") {
    throw Error(ErrorCode::InvalidArgument, "unknown grid layout '" + layout + "'");
  }
  g.pitch = j.at("pitch").get<double>();
  g.rotation = get_or(j, "rotation", 0.0);
  const auto& o = j.at("origin");
  g.origin = {o.at(0).get<double>(), o.at(1).get<double>()};
  g.rows = j.at("rows").get<int>();
  g.cols = j.at("cols").get<int>();
  g.validate();
  return g;
}

Json physical_to_json(const PhysicalCameraParams& c) {
  return {{"F", c.F}, {"L", c.L}, {"l", c.l}, {"d_pix", c.d_pix}, {"c_x", c.c_x}, {"c_y", c.c_y}};
}

PhysicalCameraParams physical_from_json(const Json& j) {
  PhysicalCameraParams c;
  c.F = j.at("F").get<double>();
  c.L = j.at("L").get<double>();
  c.l = j.at("l").get<double>();
  c.d_pix = j.at("d_pix").get<double>();
  c.c_x = j.at("c_x").get<double>();
  c.c_y = j.at("c_y").get<double>();
  c.validate();
  return c;
}

Json distortion_to_json(const DistortionCoeffs& d) {
  return {{"k1", d.k1}, {"k2", d.k2}, {"p1", d.p1}, {"p2", d.p2}};
}

DistortionCoeffs distortion_from_json(const Json& j) {
  DistortionCoeffs d;
  d.k1 = get_or(j, "k1", 0.0);
  d.k2 = get_or(j, "k2", 0.0);
  d.p1 = get_or(j, "p1", 0.0);
  d.p2 = get_or(j, "p2", 0.0);
  return d;
}

CheckerboardSpec board_from_json(const Json& j) {
  CheckerboardSpec s;
  s.rows = get_or(j, "rows", s.rows);
  s.cols = get_or(j, "cols", s.cols);
  s.cell_size = get_or(j, "cell_size", s.cell_size);
  s.validate();
  return s;
}

Json board_to_json(const CheckerboardSpec& s) {
  return {{"rows", s.rows}, {"cols", s.cols}, {"cell_size", s.cell_size}};
}

Json ground_truth_to_json(const GroundTruth& gt) {
  Json corners = Json::array();
  for (int i = 0; i < gt.board.rows; ++i) {
    for (int jj = 0; jj < gt.board.cols; ++jj) {
      const LFPoint& p = gt.corners[static_cast<size_t>(i * gt.board.cols + jj)];
      const ScenePoint P = corner_depth(gt.pose, gt.board.corner(i, jj));
      corners.push_back({{"i", i}, {"j", jj}, {"x", p.x_c_sub}, {"y", p.y_c_sub},
                         {"lambda", p.lambda}, {"X", P.x()}, {"Y", P.y()}, {"Z", P.z()}});
    }
  }
  return {{"image", gt.image},
          {"pose", pose_to_json(gt.pose)},
          {"camera", physical_to_json(gt.camera)},
          {"intrinsics",
           [&] {
             const SarbIntrinsics s = sarb_from_physical(gt.camera);
             return Json{{"fx", s.f_x}, {"fy", s.f_y}, {"cx", s.c_x},
                         {"cy", s.c_y}, {"K1", s.K1}, {"K2", s.K2}};
           }()},
          {"distortion", distortion_to_json(gt.distortion)},
          {"board", board_to_json(gt.board)},
          {"corners", corners}};
}

GroundTruth ground_truth_from_json(const Json& j) {
  GroundTruth gt;
  gt.image = get_or<std::string>(j, "image", "");
  gt.pose = pose_from_json(j.at("pose"));
  gt.camera = physical_from_json(j.at("camera"));
  gt.distortion = j.contains("distortion") ? distortion_from_json(j.at("distortion"))
                                           : DistortionCoeffs{};
  gt.board = board_from_json(j.at("board"));
  gt.corners.assign(static_cast<size_t>(gt.board.corner_count()), LFPoint{});
  for (const auto& c : j.at("corners")) {
    const int i = c.at("i").get<int>(), jj = c.at("j").get<int>();
    if (i < 0 || i >= gt.board.rows || jj < 0 || jj >= gt.board.cols) {
      throw Error(ErrorCode::InvalidArgument, "sidecar corner index out of range");
    }
    gt.corners[static_cast<size_t>(i * gt.board.cols + jj)] = {
        c.at("x").get<double>(), c.at("y").get<double>(), c.at("lambda").get<double>()};
  }
  return gt;
}

Json detection_to_json(const DetectedBoard& det) {
  Json corners = Json::array();
  for (const auto& c : det.corners) {
    corners.push_back({{"i", c.i},
                       {"j", c.j},
                       {"x", c.point.x_c_sub},
                       {"y", c.point.y_c_sub},
                       {"lambda", c.point.lambda},
                       {"residual", c.residual},
                       {"score", c.score},
                       {"valid", c.valid}});
  }
  int ok = 0;
  for (const auto& s : det.segments) ok += s.ok ? 1 : 0;
  return {{"rows", det.rows},
          {"cols", det.cols},
          {"valid", det.valid_count()},
          {"segments", det.segments.size()},
          {"segments_ok", ok},
          {"corners", corners}};
}

DetectedBoard detection_from_json(const Json& j) {
  DetectedBoard det;
  det.rows = j.at("rows").get<int>();
  det.cols = j.at("cols").get<int>();
  det.corners.assign(static_cast<size_t>(det.rows * det.cols), DetectedCorner{});
  for (const auto& c : j.at("corners")) {
    DetectedCorner dc;
    dc.i = c.at("i").get<int>();
    dc.j = c.at("j").get<int>();
    if (dc.i < 0 || dc.i >= det.rows || dc.j < 0 || dc.j >= det.cols) {
      throw Error(ErrorCode::InvalidArgument, "corner index out of range");
    }
    dc.point = {c.at("x").get<double>(), c.at("y").get<double>(), c.at("lambda").get<double>()};
    dc.residual = get_or(c, "residual", 0.0);
    dc.score = get_or(c, "score", 0.0);
    dc.valid = c.at("valid").get<bool>();
    det.corners[static_cast<size_t>(dc.i * det.cols + dc.j)] = dc;
  }
  return det;
}

Json calibration_to_json(const CalibrationResult& res, const std::vector<std::string>& images) {
  Json per_image = Json::array();
  for (size_t k = 0; k < res.poses.size(); ++k) {
    Json e = pose_to_json(res.poses[k]);
    e["image"] = k < images.size() ? images[k] : "";
    if (k < res.residuals.size()) {
      e["corners"] = res.residuals[k].corners;
      e["rms"] = res.residuals[k].rms;
      e["max"] = res.residuals[k].max;
    }
    per_image.push_back(e);
  }
  const SarbIntrinsics& in = res.intrinsics;
  const DistortionCoeffs& d = res.distortion;
  return {{"fx", in.f_x},
          {"fy", in.f_y},
          {"cx", in.c_x},
          {"cy", in.c_y},
          {"k1", d.k1},
          {"k2_dist", d.k2},
          {"p1", d.p1},
          {"p2", d.p2},
          {"K1", in.K1},
          {"K2", in.K2},
          {"images", per_image},
          {"residuals",
           {{"rms_reprojection", res.rms_reprojection},
            {"closed_form_rms", res.closed_form_rms},
            {"k1k2_residual", res.k1k2_residual},
            {"disparity_law_rms", res.step2.rms_law},
            {"disparity_law_bound", res.step2.law_bound},
            {"disparity_samples", res.step2.samples},
            {"ls_K1", res.step2.ls_K1},
            {"ls_K2", res.step2.ls_K2}}},
          {"ill_conditioned", res.ill_conditioned},
          {"refine_diverged", res.refine_diverged},
          {"refine_iterations", res.refine_iterations}};
}

CalibrationResult calibration_from_json(const Json& j, std::vector<std::string>* images) {
  CalibrationResult res;
  res.intrinsics.f_x = j.at("fx").get<double>();
  res.intrinsics.f_y = j.at("fy").get<double>();
  res.intrinsics.c_x = j.at("cx").get<double>();
  res.intrinsics.c_y = j.at("cy").get<double>();
  res.intrinsics.K1 = j.at("K1").get<double>();
  res.intrinsics.K2 = j.at("K2").get<double>();
  res.distortion.k1 = j.at("k1").get<double>();
  res.distortion.k2 = j.at("k2_dist").get<double>();
  res.distortion.p1 = j.at("p1").get<double>();
  res.distortion.p2 = j.at("p2").get<double>();
  if (images) images->clear();
  for (const auto& e : j.at("images")) {
    res.poses.push_back(pose_from_json(e));
    ViewResidual vr;
    vr.corners = get_or(e, "corners", 0);
    vr.rms = get_or(e, "rms", 0.0);
    vr.max = get_or(e, "max", 0.0);
    res.residuals.push_back(vr);
    if (images) images->push_back(get_or<std::string>(e, "image", ""));
  }
  if (j.contains("residuals")) {
    const Json& r = j.at("residuals");
    res.rms_reprojection = get_or(r, "rms_reprojection", 0.0);
    res.closed_form_rms = get_or(r, "closed_form_rms", 0.0);
    res.k1k2_residual = get_or(r, "k1k2_residual", 0.0);
    res.step2.residual = res.k1k2_residual;
    res.step2.rms_law = get_or(r, "disparity_law_rms", 0.0);
    res.step2.law_bound = get_or(r, "disparity_law_bound", 0.0);
    res.step2.samples = get_or(r, "disparity_samples", 0);
    res.step2.ls_K1 = get_or(r, "ls_K1", 0.0);
    res.step2.ls_K2 = get_or(r, "ls_K2", 0.0);
  }
  res.step2.K1 = res.intrinsics.K1;
  res.step2.K2 = res.intrinsics.K2;
  res.ill_conditioned = get_or(j, "ill_conditioned", false);
  res.refine_diverged = get_or(j, "refine_diverged", false);
  res.refine_iterations = get_or(j, "refine_iterations", 0);
  return res;
}

namespace {

Json summary_to_json(const MetricSummary& s) {
  return {{"count", s.count},
          {"p2re_rms", s.p2re_rms},
          {"p2re_mean", s.p2re_mean},
          {"p2pe_rms", s.p2pe_rms},
          {"p2pe_mean", s.p2pe_mean},
          {"rde_rms", s.rde_rms},
          {"rde_mean", s.rde_mean}};
}

}  // namespace

Json metrics_to_json(const EvaluationReport& rep) {
  Json per_image = Json::array();
  for (const auto& s : rep.per_image) per_image.push_back(summary_to_json(s));
  return {{"overall", summary_to_json(rep.overall)},
          {"per_image", per_image},
          {"skipped", rep.skipped}};
}

std::string metrics_to_csv(const EvaluationReport& rep, const std::vector<std::string>& images) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "image,i,j,p2re_mm,p2pe_mm,rde,z_in,z_ex\n";
  for (const auto& c : rep.corners) {
    const std::string name =
        c.image < static_cast<int>(images.size()) ? images[static_cast<size_t>(c.image)]
                                                  : std::to_string(c.image);
    os << name << ',' << c.i << ',' << c.j << ',' << c.p2re << ',' << c.p2pe << ',' << c.rde
       << ',' << c.z_in << ',' << c.z_ex << '\n';
  }
  return os.str();
}

}  // namespace lfcal
