#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lfcal/corner_detect.hpp"
#include "lfcal/error.hpp"
#include "lfcal/synthetic_renderer.hpp"
#include "test_util.hpp"

using namespace lfcal;

namespace {

LFPoint add(const LFPoint& p, const Eigen::Vector3d& d, double t) {
  return {p.x_c_sub + t * d.x(), p.y_c_sub + t * d.y(), p.lambda + t * d.z()};
}

// One rendered scene shared by the detector tests.
struct Scene {
  RenderConfig cfg;
  SceneBoard board;
  RawImage raw;
  std::vector<LFPoint> truth;
  DetectorOptions opt;
};

const Scene& scene() {
  static const Scene s = [] {
    Scene s;
    s.cfg = test::lf_camera(800, 600);
    s.board.spec = {3, 4, 30.0};
    s.board.pose = test::board_pose(s.board.spec, 420, 0.2, -0.15, 0.3, 10, -5);
    s.raw = render(s.board, s.cfg);
    s.truth = analytic_corner_lf_points(s.board, s.cfg.cam);
    s.opt.lambda_min = -2.5;
    s.opt.lambda_max = 2.5;
    return s;
  }();
  return s;
}

const LFPoint& truth(int i, int j) { return scene().truth[i * scene().board.spec.cols + j]; }

double lateral(const LFPoint& a, const LFPoint& b) {
  return std::hypot(a.x_c_sub - b.x_c_sub, a.y_c_sub - b.y_c_sub);
}

}  // namespace

TEST(ClassifyOrientation, AngleRule) {
  EXPECT_EQ(classify_orientation({0, 0}, {10, 1}), Orientation::Horizontal);
  EXPECT_EQ(classify_orientation({0, 0}, {1, 10}), Orientation::Vertical);
  EXPECT_EQ(classify_orientation({0, 0}, {1, 1}), Orientation::Horizontal);
  EXPECT_EQ(classify_orientation({0, 0}, {-1, 1}), Orientation::Horizontal);
  try {
    classify_orientation({2, 3}, {2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateLine);
  }
}

TEST(LFLine, ParametersAndEndpoints) {
  const LFLine h = LFLine::through({10, 20, 0.5}, {40, 25, 0.7});
  EXPECT_EQ(h.orientation, Orientation::Horizontal);
  EXPECT_EQ(h.fixed[0], 10);
  EXPECT_EQ(h.fixed[1], 40);
  EXPECT_EQ(h.params[0], 20);
  EXPECT_EQ(h.params[1], 0.5);
  EXPECT_EQ(h.params[3], 0.7);
  const LFPoint e = h.endpoint(1);
  EXPECT_EQ(e.x_c_sub, 40);
  EXPECT_EQ(e.y_c_sub, 25);
  const LFLine v = LFLine::through({10, 20, 0.5}, {12, 60, 0.7});
  EXPECT_EQ(v.orientation, Orientation::Vertical);
  EXPECT_EQ(v.fixed[0], 20);
  EXPECT_EQ(v.params[2], 12);
}

TEST(SliceLine, DiagonalThroughOrigin) {
  // both endpoints at disparity 1 through the lens center
  const LFLine line = LFLine::through(Orientation::Horizontal, {0, 0, 1}, {1, 1, 1});
  const Line2D l = slice_line(line, {0, 0});
  EXPECT_NEAR(l.a * l.a + l.b * l.b, 1, 1e-15);
  EXPECT_NEAR(std::abs(l.a), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(l.a, -l.b, 1e-15);
  EXPECT_NEAR(l.c, 0, 1e-15);
}

TEST(SliceLine, ZeroDisparityLineIsDegenerate) {
  // every sub-image sees a single point of a line on the focal plane
  const LFLine line = LFLine::through({100, 50, 0}, {180, 70, 0});
  try {
    slice_line(line, {125, 56});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateLine);
  }
}

TEST(SliceLine, PassesThroughSlicedEndpoints) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> pos(0, 2000), lam(-2.5, 2.5), off(-200, 200);
  for (int k = 0; k < 1000; ++k) {
    const LFPoint a{pos(rng), pos(rng), lam(rng)};
    const LFPoint b{a.x_c_sub + off(rng), a.y_c_sub + off(rng), lam(rng)};
    if (std::hypot(a.x_c_sub - b.x_c_sub, a.y_c_sub - b.y_c_sub) < 1) continue;
    const PixelPoint c(pos(rng), pos(rng));
    const Line2D l = slice_line(LFLine::through(a, b), c);
    for (const LFPoint& p : {a, b}) {
      // the sub-image at c records p at offset s with c = x + lambda s
      const PixelPoint s = (c - PixelPoint(p.x_c_sub, p.y_c_sub)) / p.lambda;
      const PixelPoint back = lf_point_slice(p, s);
      ASSERT_LT((back - c).norm(), 1e-9);
      EXPECT_LT(std::abs(l.distance(s.x(), s.y())), 1e-12 * std::max(1.0, s.norm()));
    }
  }
}

TEST(MakeTemplate, EmptyCenteredAndZeroMean) {
  const RawImage raw(100, 100, 0.5f);
  MicroLensGrid g;
  g.pitch = 10;
  g.origin = {5, 5};
  g.rows = g.cols = 10;
  const SubImage sub = sub_image(raw, g, 4, 4, 4.5);
  EXPECT_TRUE(make_template({1, 0, 20}, sub, 1).empty);
  EXPECT_TRUE(make_template({0, 1, -4.5}, sub, 1).empty);

  for (TemplateProfile p : {TemplateProfile::LinearRamp, TemplateProfile::PixelArea}) {
    const Template2D t = make_template({1, 0, 0}, sub, 1, p);
    ASSERT_FALSE(t.empty);
    double sum = 0;
    int pos = 0, neg = 0;
    for (size_t k = 0; k < t.values.size(); ++k) {
      sum += t.values[k];
      const int dx = t.window.pixels[k].x() - static_cast<int>(sub.center.x());
      pos += dx > 0;
      neg += dx < 0;
    }
    EXPECT_NEAR(sum, 0, 1e-12);
    EXPECT_EQ(pos, neg);

    const Template2D tilted = make_template({0.6, 0.8, 1.3}, sub, -1, p);
    double s2 = 0;
    for (double v : tilted.values) s2 += v;
    EXPECT_NEAR(s2, 0, 1e-12);
  }
}

TEST(TemplateNcc, SelfAndAntiCorrelation) {
  RawImage raw(100, 100, 0.5f);
  MicroLensGrid g;
  g.pitch = 10;
  g.origin = {5, 5};
  g.rows = g.cols = 10;
  const SubImage sub = sub_image(raw, g, 3, 6, 4.5);
  const Template2D t = make_template({0.6, -0.8, 0.7}, sub, 1);
  EXPECT_EQ(template_ncc(t, raw), 0.0);  // flat window
  for (size_t k = 0; k < t.values.size(); ++k) {
    raw.at(t.window.pixels[k].x(), t.window.pixels[k].y()) = static_cast<float>(0.5 + 0.2 * t.values[k]);
  }
  EXPECT_NEAR(template_ncc(t, raw), 1.0, 1e-6);
  for (size_t k = 0; k < t.values.size(); ++k) {
    raw.at(t.window.pixels[k].x(), t.window.pixels[k].y()) = static_cast<float>(0.5 - 0.2 * t.values[k]);
  }
  EXPECT_NEAR(template_ncc(t, raw), -1.0, 1e-6);
  EXPECT_EQ(template_ncc(Template2D{}, raw), 0.0);
}

TEST(TotalNcc, BoundedByTermCount) {
  const Scene& s = scene();
  const LFLine line = LFLine::through(truth(1, 1), truth(1, 2));
  const auto strip = segment_strip(s.cfg.grid, s.raw.width(), s.raw.height(),
                                   {truth(1, 1).x_c_sub, truth(1, 1).y_c_sub},
                                   {truth(1, 2).x_c_sub, truth(1, 2).y_c_sub}, s.opt);
  ASSERT_FALSE(strip.empty());
  for (int polarity : {1, -1}) {
    const Template4D t = build_template(line, strip, s.raw, s.cfg.grid, 4.5, polarity);
    int nonempty = 0;
    double sum = 0;
    for (const auto& item : t.items) {
      const double v = template_ncc(item, s.raw);
      EXPECT_GE(v, -1.0 - 1e-12);
      EXPECT_LE(v, 1.0 + 1e-12);
      nonempty += item.empty ? 0 : 1;
      sum += v;
    }
    EXPECT_NEAR(total_ncc(t, s.raw), sum, 1e-9);
    EXPECT_LE(std::abs(total_ncc(t, s.raw)), nonempty);
  }
}

TEST(IntersectLfLines, RecoversConstructedPoint) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> pos(0, 3000), lam(-2.5, 2.5), along(20, 80),
      slope(-0.6, 0.6), dl(-0.01, 0.01);
  for (int k = 0; k < 1000; ++k) {
    const LFPoint p{pos(rng), pos(rng), lam(rng)};
    const Eigen::Vector3d dh(1, slope(rng), dl(rng)), dv(slope(rng), 1, dl(rng));
    const LFLine h = LFLine::through(Orientation::Horizontal, add(p, dh, -along(rng)), add(p, dh, along(rng)));
    const LFLine v = LFLine::through(Orientation::Vertical, add(p, dv, -along(rng)), add(p, dv, along(rng)));
    const Intersection x = intersect_lf_lines(v, h);
    EXPECT_NEAR(x.point.x_c_sub, p.x_c_sub, 1e-9);
    EXPECT_NEAR(x.point.y_c_sub, p.y_c_sub, 1e-9);
    EXPECT_NEAR(x.point.lambda, p.lambda, 1e-9);
    EXPECT_LT(x.residual, 1e-9);
  }
}

TEST(IntersectLfLines, DegenerateAndPlanarCases) {
  const LFPoint a{100, 100, 0.3}, b{140, 150, 0.5};
  try {
    intersect_lf_lines(LFLine::through(Orientation::Vertical, a, b),
                       LFLine::through(Orientation::Horizontal, a, b));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentLines);
  }
  const LFLine h = LFLine::through({0, 10, 0}, {50, 12, 0});
  const LFLine v = LFLine::through({20, -30, 0}, {22, 40, 0});
  EXPECT_NEAR(intersect_lf_lines(v, h).point.lambda, 0, 1e-12);
}

TEST(IntersectLfLines, SkewLinesExceedThreshold) {
  const LFLine h = LFLine::through({0, 0, 0.0}, {50, 0, 0.0});
  const LFLine v = LFLine::through({25, -20, 1.0}, {25, 20, 1.0});  // passes above h
  try {
    intersect_lf_lines(v, h, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentLines);
  }
}

TEST(SegmentStrip, LensesNearSegmentInsideSensor) {
  MicroLensGrid g;
  g.pitch = 10;
  g.origin = {5, 5};
  g.rows = 30;
  g.cols = 40;
  DetectorOptions opt;
  const PixelPoint p1(100, 150), p2(200, 160);
  const auto strip = segment_strip(g, 400, 300, p1, p2, opt);
  ASSERT_FALSE(strip.empty());
  const Eigen::Vector2d d = (p2 - p1).normalized();
  for (const auto& li : strip) {
    const PixelPoint c = g.lens_center(li.i, li.j);
    const Eigen::Vector2d r = c - p1;
    EXPECT_LE(std::abs(d.x() * r.y() - d.y() * r.x()), opt.strip_half_width * g.pitch + 1e-9);
    const double t = d.dot(r);
    EXPECT_GT(t, 0);
    EXPECT_LT(t, (p2 - p1).norm());
  }
  // a larger disparity hint trims more
  EXPECT_LT(segment_strip(g, 400, 300, p1, p2, opt, 2.0).size(), strip.size());
}

TEST(InitialLine, SweepFromExactEndpoints) {
  const Scene& s = scene();
  const CheckerboardSpec& spec = s.board.spec;
  for (int i = 0; i < spec.rows; ++i) {
    for (int j = 0; j < spec.cols; ++j) {
      for (auto [i1, j1] : {std::pair{i, j + 1}, std::pair{i + 1, j}}) {
        if (i1 >= spec.rows || j1 >= spec.cols) continue;
        const LFPoint& a = truth(i, j);
        const LFPoint& b = truth(i1, j1);
        const PixelPoint p1(a.x_c_sub, a.y_c_sub), p2(b.x_c_sub, b.y_c_sub);
        // the checkerboard parity decides the sign; take the better one
        LineInit best;
        best.score = -INFINITY;
        for (int polarity : {1, -1}) {
          const LineInit init = initial_lf_line(s.raw, s.cfg.grid, p1, p2, polarity, s.opt);
          if (init.score > best.score) best = init;
        }
        EXPECT_FALSE(best.boundary_warning);
        const LFPoint e0 = best.line.endpoint(0), e1 = best.line.endpoint(1);
        EXPECT_EQ(e0.x_c_sub, a.x_c_sub);
        EXPECT_EQ(e1.y_c_sub, b.y_c_sub);
        EXPECT_EQ(e0.lambda, e1.lambda);
        EXPECT_NEAR(e0.lambda, 0.5 * (a.lambda + b.lambda), 0.05 + 1e-9) << i << j << i1 << j1;
      }
    }
  }
}

TEST(CoarseCorners, WithinAFifthOfALens) {
  const Scene& s = scene();
  const BoardTopology topo = order_board(
      find_saddle_points(lens_mean_image(s.raw, s.cfg.grid, 4.5), s.cfg.grid), s.board.spec);
  for (int i = 0; i < s.board.spec.rows; ++i) {
    for (int j = 0; j < s.board.spec.cols; ++j) {
      ASSERT_TRUE(topo.at(i, j).has_value());
      const PixelPoint t(truth(i, j).x_c_sub, truth(i, j).y_c_sub);
      EXPECT_LT((topo.at(i, j)->position - t).norm(), 0.2 * s.cfg.grid.pitch);
    }
  }
}

TEST(InitialLine, FlatImageWarns) {
  MicroLensGrid g;
  g.pitch = 10;
  g.origin = {5, 5};
  g.rows = 30;
  g.cols = 40;
  const LineInit init = initial_lf_line(RawImage(400, 300, 0.5f), g, {100, 150}, {200, 160}, 1);
  EXPECT_TRUE(init.boundary_warning);
}

TEST(InitialLine, DefaultSweepTooNarrowForLargeDisparity) {
  // The scene sits at lambda ~ 1.5; the default +-1.2 sweep hits its edge.
  const Scene& s = scene();
  ASSERT_GT(truth(1, 1).lambda, 1.3);
  const DetectedBoard det = detect_board(s.raw, s.cfg.grid, s.board.spec, DetectorOptions{});
  int warned = 0;
  for (const auto& seg : det.segments) warned += seg.init.boundary_warning ? 1 : 0;
  EXPECT_GT(warned, 0);
}

TEST(RefineLfLine, FixedPointOnTemplateImage) {
  // An image made of the line's own templates scores every term at 1, so no
  // move can improve on the truth.
  MicroLensGrid g;
  g.pitch = 10;
  g.origin = {5, 5};
  g.rows = 40;
  g.cols = 50;
  RawImage raw(500, 400, 0.5f);
  const LFLine line = LFLine::through({180, 200, 1.4}, {260, 215, 1.5});
  for (int i = 0; i < g.rows; ++i) {
    for (int j = 0; j < g.cols; ++j) {
      const Template2D t =
          make_template(slice_line(line, g.lens_center(i, j)), sub_image(raw, g, i, j, 4.5), 1);
      if (t.empty) continue;
      for (size_t k = 0; k < t.values.size(); ++k) {
        raw.at(t.window.pixels[k].x(), t.window.pixels[k].y()) =
            static_cast<float>(0.5 + 0.2 * t.values[k]);
      }
    }
  }
  DetectorOptions opt;
  opt.lambda_max = 2.5;
  const RefineResult r = refine_lf_line(line, raw, g, 1, opt);
  EXPECT_FALSE(r.improved);
  EXPECT_EQ(r.line.params, line.params);
  EXPECT_NEAR(r.score, r.terms, 1e-6);
}

TEST(RefineLfLine, ConvergesFromPerturbedStart) {
  const Scene& s = scene();
  for (auto [i0, j0, i1, j1] : {std::array{1, 1, 1, 2}, std::array{0, 2, 1, 2}}) {
    const LFLine gt = LFLine::through(truth(i0, j0), truth(i1, j1));
    int polarity = 1;
    {
      const auto strip = segment_strip(s.cfg.grid, 800, 600, {truth(i0, j0).x_c_sub, truth(i0, j0).y_c_sub},
                                       {truth(i1, j1).x_c_sub, truth(i1, j1).y_c_sub}, s.opt);
      if (total_ncc(build_template(gt, strip, s.raw, s.cfg.grid, 4.5, 1), s.raw) < 0) polarity = -1;
    }
    LFLine start = gt;
    start.params[0] += 0.5;
    start.params[1] += 0.05;
    start.params[2] -= 0.5;
    start.params[3] -= 0.05;
    const RefineResult r = refine_lf_line(start, s.raw, s.cfg.grid, polarity, s.opt);
    EXPECT_TRUE(r.improved);
    EXPECT_NEAR(r.line.params[0], gt.params[0], 0.05);
    EXPECT_NEAR(r.line.params[2], gt.params[2], 0.05);
    EXPECT_NEAR(r.line.params[1], gt.params[1], 0.01);
    EXPECT_NEAR(r.line.params[3], gt.params[3], 0.01);
    ASSERT_FALSE(r.trace.empty());
    EXPECT_EQ(r.trace.front(), r.initial_score);
    for (size_t k = 1; k < r.trace.size(); ++k) EXPECT_GE(r.trace[k], r.trace[k - 1]);
    EXPECT_GE(r.score, r.initial_score);

    // starting at the truth stays there up to the detector's bias
    const RefineResult at = refine_lf_line(gt, s.raw, s.cfg.grid, polarity, s.opt);
    EXPECT_NEAR(at.line.params[0], gt.params[0], 0.02);
    EXPECT_NEAR(at.line.params[1], gt.params[1], 0.005);
  }
}

TEST(TotalNcc, TruthBeatsPerturbations) {
  const Scene& s = scene();
  const LFLine gt = LFLine::through(truth(1, 1), truth(1, 2));
  const auto strip = segment_strip(s.cfg.grid, 800, 600, {truth(1, 1).x_c_sub, truth(1, 1).y_c_sub},
                                   {truth(1, 2).x_c_sub, truth(1, 2).y_c_sub}, s.opt, 1.6);
  double best = total_ncc(build_template(gt, strip, s.raw, s.cfg.grid, 4.5, 1), s.raw);
  const int polarity = best > 0 ? 1 : -1;
  best = std::abs(best);
  for (int k = 0; k < 4; ++k) {
    for (double sign : {-1.0, 1.0}) {
      LFLine p = gt;
      p.params[k] += sign * (k % 2 == 0 ? 0.5 : 0.05);
      EXPECT_LT(total_ncc(build_template(p, strip, s.raw, s.cfg.grid, 4.5, polarity), s.raw), best);
    }
  }
}

TEST(DetectBoard, NoiseFreeRender) {
  const Scene& s = scene();
  const DetectedBoard det = detect_board(s.raw, s.cfg.grid, s.board.spec, s.opt);
  EXPECT_EQ(det.valid_count(), 12);
  for (const auto& c : det.corners) {
    ASSERT_TRUE(c.valid);
    EXPECT_LT(lateral(c.point, truth(c.i, c.j)), 0.05);
    EXPECT_LT(std::abs(c.point.lambda - truth(c.i, c.j).lambda), 0.01);
  }
  for (const auto& seg : det.segments) {
    EXPECT_TRUE(seg.ok);
    const auto& tr = seg.refine.trace;
    for (size_t k = 1; k < tr.size(); ++k) EXPECT_GE(tr[k], tr[k - 1]);
  }
}

TEST(DetectBoard, NoisyRender) {
  const Scene& s = scene();
  int valid = 0, total = 0;
  double err = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RawImage noisy = s.raw;
    add_noise(noisy, 0.01, seed);
    const DetectedBoard det = detect_board(noisy, s.cfg.grid, s.board.spec, s.opt);
    for (const auto& c : det.corners) {
      ++total;
      if (!c.valid) continue;
      ++valid;
      err += lateral(c.point, truth(c.i, c.j));
    }
  }
  EXPECT_GE(valid, 0.95 * total);
  EXPECT_LT(err / valid, 0.2);
}

TEST(DetectBoard, EquivariantUnderWholeLensShifts) {
  const Scene& s = scene();
  const int dx = 20, dy = -10;
  RawImage shifted(s.raw.width(), s.raw.height(), 0.5f);
  for (int y = 0; y < shifted.height(); ++y) {
    for (int x = 0; x < shifted.width(); ++x) {
      const int sx = x - dx, sy = y - dy;
      if (sx >= 0 && sy >= 0 && sx < s.raw.width() && sy < s.raw.height()) {
        shifted.at(x, y) = s.raw.at(sx, sy);
      }
    }
  }
  const DetectedBoard a = detect_board(s.raw, s.cfg.grid, s.board.spec, s.opt);
  const DetectedBoard b = detect_board(shifted, s.cfg.grid, s.board.spec, s.opt);
  for (size_t k = 0; k < a.corners.size(); ++k) {
    EXPECT_EQ(a.corners[k].valid, b.corners[k].valid);
    EXPECT_NEAR(b.corners[k].point.x_c_sub - a.corners[k].point.x_c_sub, dx, 1e-9);
    EXPECT_NEAR(b.corners[k].point.y_c_sub - a.corners[k].point.y_c_sub, dy, 1e-9);
    EXPECT_NEAR(b.corners[k].point.lambda, a.corners[k].point.lambda, 1e-12);
  }
}

TEST(DetectBoard, OccludedEdgeMasksItsCorner) {
  // Flatten the middle of the board edge from corner (0, 0) to (0, 1). Corner
  // (0, 0) has no other segment along the row and must be masked; every other
  // corner stays accurate, and those away from the edge do not move.
  const Scene& s = scene();
  RawImage occluded = s.raw;
  const PixelPoint a(truth(0, 0).x_c_sub, truth(0, 0).y_c_sub);
  const PixelPoint b(truth(0, 1).x_c_sub, truth(0, 1).y_c_sub);
  for (double t = 0.3; t <= 0.7; t += 0.02) {
    const PixelPoint m = a + t * (b - a);
    for (int y = static_cast<int>(m.y()) - 12; y <= static_cast<int>(m.y()) + 12; ++y)
      for (int x = static_cast<int>(m.x()) - 12; x <= static_cast<int>(m.x()) + 12; ++x)
        if ((PixelPoint(x, y) - m).norm() < 12) occluded.at(x, y) = 0.5f;
  }
  const DetectedBoard clean = detect_board(s.raw, s.cfg.grid, s.board.spec, s.opt);
  const DetectedBoard det = detect_board(occluded, s.cfg.grid, s.board.spec, s.opt);
  EXPECT_FALSE(det.at(0, 0).valid);
  for (int i = 0; i < s.board.spec.rows; ++i) {
    for (int j = 0; j < s.board.spec.cols; ++j) {
      if (i == 0 && j == 0) continue;
      const DetectedCorner& c = det.at(i, j);
      EXPECT_TRUE(c.valid) << i << "," << j;
      EXPECT_LT(lateral(c.point, truth(i, j)), 0.05) << i << "," << j;
      EXPECT_LT(std::abs(c.point.lambda - truth(i, j).lambda), 0.01) << i << "," << j;
      if (i + j >= 2) {
        // untouched segments agree with the clean run to the search tolerance
        EXPECT_LT(lateral(c.point, clean.at(i, j).point), 0.01) << i << "," << j;
        EXPECT_NEAR(c.point.lambda, clean.at(i, j).point.lambda, 0.005) << i << "," << j;
      }
    }
  }
}
