#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "lfcal/error.hpp"
#include "lfcal/formats.hpp"
#include "test_util.hpp"

using namespace lfcal;
namespace fs = std::filesystem;

namespace {

// Through text, as the files are.
Json reparse(const Json& j) { return Json::parse(j.dump()); }

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Files, AtomicWriteAndRead) {
  const fs::path dir = fs::temp_directory_path() / "lfcal_formats_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file_atomic(dir / "a.json", "{\"x\": 1}");
  write_file_atomic(dir / "a.json", "{\"x\": 2}");
  EXPECT_EQ(read_json(dir / "a.json")["x"], 2);
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1);
  EXPECT_THROW(read_file(dir / "missing.json"), Error);
  write_file_atomic(dir / "bad.json", "{");
  EXPECT_ANY_THROW(read_json(dir / "bad.json"));
  fs::remove_all(dir);
}

TEST(Json, PoseForms) {
  const Pose p = test::board_pose({6, 8, 30}, 420, 0.3, -0.2, 0.7, 12, -4);
  const Pose back = pose_from_json(reparse(pose_to_json(p)));
  EXPECT_EQ(back.R, p.R);
  EXPECT_EQ(back.T, p.T);

  const Json rv = {{"rvec", {0, 0, M_PI / 2}}, {"T", {1, 2, 300}}};
  const Pose q = pose_from_json(rv);
  EXPECT_NEAR(q.R(0, 1), -1, 1e-15);
  EXPECT_NEAR(q.R(1, 0), 1, 1e-15);
  EXPECT_EQ(q.T.z(), 300);
  EXPECT_ANY_THROW(pose_from_json(Json{{"T", {0, 0, 1}}}));
}

TEST(Json, CameraGridBoardDistortion) {
  PhysicalCameraParams cam;
  cam.F = 4.84464920531;
  cam.L = 5;
  cam.l = 0.065;
  cam.d_pix = 0.00168833333333;
  cam.c_x = 1500.25;
  cam.c_y = 1124.75;
  const PhysicalCameraParams c2 = physical_from_json(reparse(physical_to_json(cam)));
  EXPECT_EQ(c2.F, cam.F);
  EXPECT_EQ(c2.d_pix, cam.d_pix);
  EXPECT_EQ(c2.c_y, cam.c_y);

  MicroLensGrid g;
  g.pitch = 10.3;
  g.origin = {5.1, 4.9};
  g.rotation = 0.002;
  g.rows = 225;
  g.cols = 300;
  g.layout = GridLayout::Hexagonal;
  const MicroLensGrid g2 = grid_from_json(reparse(grid_to_json(g)));
  EXPECT_EQ(g2.pitch, g.pitch);
  EXPECT_EQ(g2.origin, g.origin);
  EXPECT_EQ(g2.rotation, g.rotation);
  EXPECT_EQ(g2.rows, g.rows);
  EXPECT_EQ(g2.cols, g.cols);
  EXPECT_EQ(g2.layout, g.layout);

  const CheckerboardSpec b = board_from_json(reparse(board_to_json({5, 7, 25.5})));
  EXPECT_EQ(b.rows, 5);
  EXPECT_EQ(b.cols, 7);
  EXPECT_EQ(b.cell_size, 25.5);

  DistortionCoeffs d;
  d.k1 = 0.01;
  d.k2 = -0.002;
  d.p1 = 1e-5;
  d.p2 = -3e-6;
  const DistortionCoeffs d2 = distortion_from_json(reparse(distortion_to_json(d)));
  EXPECT_EQ(d2.k1, d.k1);
  EXPECT_EQ(d2.k2, d.k2);
  EXPECT_EQ(d2.p1, d.p1);
  EXPECT_EQ(d2.p2, d.p2);
}

TEST(Json, GroundTruthAndDetection) {
  GroundTruth gt;
  gt.image = "img_003.png";
  gt.pose = test::board_pose({2, 3, 30}, 400, 0.1, 0.2, 0.3);
  gt.board = {2, 3, 30};
  gt.camera = test::lf_camera(800, 600).cam;
  for (int k = 0; k < 6; ++k) gt.corners.push_back({100.5 + k, 200.25 - k, 1.5 + 0.01 * k});
  const GroundTruth g2 = ground_truth_from_json(reparse(ground_truth_to_json(gt)));
  EXPECT_EQ(g2.image, gt.image);
  EXPECT_EQ(g2.pose.R, gt.pose.R);
  ASSERT_EQ(g2.corners.size(), 6u);
  EXPECT_EQ(g2.corners[5].lambda, gt.corners[5].lambda);
  EXPECT_EQ(g2.camera.F, gt.camera.F);

  DetectedBoard det;
  det.rows = 2;
  det.cols = 3;
  for (int k = 0; k < 6; ++k) {
    DetectedCorner c;
    c.i = k / 3;
    c.j = k % 3;
    c.point = {10.0 * k + 0.123456789012345, 7.0 * k, 1.6 + 1e-3 * k};
    c.residual = 1e-3 * k;
    c.score = 0.9;
    c.valid = k != 4;
    det.corners.push_back(c);
  }
  const DetectedBoard d2 = detection_from_json(reparse(detection_to_json(det)));
  EXPECT_EQ(d2.rows, 2);
  EXPECT_EQ(d2.cols, 3);
  ASSERT_EQ(d2.corners.size(), 6u);
  for (int k = 0; k < 6; ++k) {
    EXPECT_EQ(d2.corners[k].point.x_c_sub, det.corners[k].point.x_c_sub);
    EXPECT_EQ(d2.corners[k].point.lambda, det.corners[k].point.lambda);
    EXPECT_EQ(d2.corners[k].valid, det.corners[k].valid);
    EXPECT_EQ(d2.corners[k].i, det.corners[k].i);
  }
}

TEST(Json, CalibrationRoundTrip) {
  CalibrationResult c;
  c.intrinsics = {-2999.98, -3000.01, 1500.02, 1124.97, -2.4986, 389.63};
  c.distortion.k1 = 1e-4;
  c.distortion.k2 = -2e-5;
  for (int k = 0; k < 2; ++k) {
    c.poses.push_back(test::board_pose({6, 8, 30}, 400 + k, 0.1 * k, 0.2, 0.3));
    c.residuals.push_back({48 - k, 0.002 + k, 0.01 + k});
  }
  c.rms_reprojection = 0.0024;
  const Json j = reparse(calibration_to_json(c, {"img_000.png", "img_001.png"}));
  for (const char* key : {"fx", "fy", "cx", "cy", "k1", "k2_dist", "p1", "p2", "K1", "K2"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["images"].size(), 2u);
  EXPECT_EQ(j["images"][0]["R"].size(), 9u);
  std::vector<std::string> names;
  const CalibrationResult back = calibration_from_json(j, &names);
  EXPECT_EQ(names, (std::vector<std::string>{"img_000.png", "img_001.png"}));
  EXPECT_EQ(back.intrinsics.f_x, c.intrinsics.f_x);
  EXPECT_EQ(back.intrinsics.K2, c.intrinsics.K2);
  EXPECT_EQ(back.distortion.k2, c.distortion.k2);
  ASSERT_EQ(back.poses.size(), 2u);
  EXPECT_EQ(back.poses[1].R, c.poses[1].R);
  EXPECT_EQ(back.poses[1].T, c.poses[1].T);
}

TEST(Metrics, CsvLayout) {
  EvaluationReport rep;
  CornerMetrics m;
  m.image = 1;
  m.i = 2;
  m.j = 3;
  m.p2re = 0.5;
  m.p2pe = 0.75;
  m.rde = 0.01;
  m.z_in = 404;
  m.z_ex = 400;
  rep.corners.push_back(m);
  rep.overall = summarize(rep.corners);
  rep.per_image = {summarize({}), rep.overall};
  const std::string csv = metrics_to_csv(rep, {"a.png", "b.png"});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "image,i,j,p2re_mm,p2pe_mm,rde,z_in,z_ex");
  EXPECT_NE(csv.find("b.png,2,3,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  const Json j = reparse(metrics_to_json(rep));
  EXPECT_FALSE(j.empty());
}
