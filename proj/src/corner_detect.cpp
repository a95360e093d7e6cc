#include "lfcal/corner_detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "lfcal/error.hpp"
#include "lfcal/parallel.hpp"

namespace lfcal {

namespace {

// Signed coverage 2F - 1 of a unit pixel whose center lies at signed
// distance d from a line with unit normal (a, b).
double pixel_area_profile(double d, double a, double b) {
  double u = std::abs(a), v = std::abs(b);
  if (u < v) std::swap(u, v);
  const double s1 = 0.5 * (u - v), s2 = 0.5 * (u + v);
  double F;
  if (d >= s2) F = 1;
  else if (d <= -s2) F = 0;
  else if (d > s1) F = 1 - (s2 - d) * (s2 - d) / (2 * u * v);
  else if (d < -s1) F = (d + s2) * (d + s2) / (2 * u * v);
  else F = 0.5 + d / u;
  return 2 * F - 1;
}

double profile(TemplateProfile p, double d, double a, double b) {
  if (p == TemplateProfile::LinearRamp) return 2.0 * std::clamp(d, -0.5, 0.5);
  return pixel_area_profile(d, a, b);
}

// Micro-lens data in some frame (absolute, or relative to an anchor lens):
// pixel offsets from the lens center plus the zero-mean raw values there.
struct LensData {
  PixelPoint center;
  double radius = 0;
  std::vector<Eigen::Vector2d> offsets;
  std::vector<double> values;  // raw minus window mean
  double norm2 = 0;
};

struct PreparedStrip {
  std::vector<LensData> lenses;
  TemplateProfile profile = TemplateProfile::PixelArea;
};

std::vector<Eigen::Vector2i> disc_pixels(const PixelPoint& c, double radius) {
  std::vector<Eigen::Vector2i> px;
  const int x0 = static_cast<int>(std::ceil(c.x() - radius));
  const int x1 = static_cast<int>(std::floor(c.x() + radius));
  const int y0 = static_cast<int>(std::ceil(c.y() - radius));
  const int y1 = static_cast<int>(std::floor(c.y() + radius));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - c.x(), dy = y - c.y();
      if (dx * dx + dy * dy <= r2) px.emplace_back(x, y);
    }
  }
  return px;
}

PreparedStrip prepare_strip(const std::vector<LensIndex>& strip, const RawImage& raw,
                            const MicroLensGrid& grid, double radius,
                            const PixelPoint& frame_origin, const DetectorOptions& opt) {
  PreparedStrip out;
  out.profile = opt.profile;
  const double min_contrast = opt.min_window_contrast;
  out.lenses.reserve(strip.size());
  for (const LensIndex& k : strip) {
    const PixelPoint c = grid.lens_center(k.i, k.j);
    LensData d;
    d.center = c - frame_origin;
    d.radius = radius;
    double mean = 0;
    for (const Eigen::Vector2i& p : disc_pixels(c, radius)) {
      if (p.x() < 0 || p.y() < 0 || p.x() >= raw.width() || p.y() >= raw.height()) continue;
      d.offsets.emplace_back(p.x() - c.x(), p.y() - c.y());
      d.values.push_back(raw.at(p.x(), p.y()));
      mean += d.values.back();
    }
    if (d.values.empty()) continue;
    mean /= d.values.size();
    for (double& v : d.values) {
      v -= mean;
      d.norm2 += v * v;
    }
    out.lenses.push_back(std::move(d));
  }
  // Windows with little contrast compared to the strongest one carry no
  // usable edge; NCC would still score their last few partial pixels.
  double peak = 0;
  for (const LensData& d : out.lenses) peak = std::max(peak, d.norm2 / d.values.size());
  const double floor = min_contrast * min_contrast * peak;
  std::erase_if(out.lenses, [&](const LensData& d) { return d.norm2 / d.values.size() < floor; });
  return out;
}

// Homogeneous line through the offsets where a sub-image records the two
// endpoints; not normalized. Returns false at degeneracy.
bool sliced_homogeneous(const LFLine& line, const PixelPoint& c, Eigen::Vector3d& l) {
  const LFPoint a = line.endpoint(0), b = line.endpoint(1);
  const Eigen::Vector3d h1(c.x() - a.x_c_sub, c.y() - a.y_c_sub, a.lambda);
  const Eigen::Vector3d h2(c.x() - b.x_c_sub, c.y() - b.y_c_sub, b.lambda);
  l = h1.cross(h2);
  const double n = std::hypot(l.x(), l.y());
  if (!(n > 1e-12 * h1.norm() * h2.norm()) || !std::isfinite(n)) return false;
  l /= n;
  return true;
}

// Per-lens NCC of the template implied by `line`; 0 when the template is
// empty or the window is flat.
double lens_ncc(const LensData& d, const Eigen::Vector3d& l, int polarity, TemplateProfile p,
                bool& nonempty) {
  double st = 0, st2 = 0, str = 0;
  const std::size_t n = d.values.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double t =
        polarity * profile(p, l.x() * d.offsets[k].x() + l.y() * d.offsets[k].y() + l.z(), l.x(), l.y());
    st += t;
    st2 += t * t;
    str += t * d.values[k];
  }
  const double var_t = st2 - st * st / n;
  nonempty = var_t > 1e-12;
  if (!nonempty || d.norm2 < 1e-20) return 0.0;
  return std::clamp(str / std::sqrt(var_t * d.norm2), -1.0, 1.0);
}

double strip_score(const LFLine& line, const PreparedStrip& s, int polarity, int* terms = nullptr) {
  double total = 0;
  int count = 0;
  for (const LensData& d : s.lenses) {
    Eigen::Vector3d l;
    if (!sliced_homogeneous(line, d.center, l)) continue;
    bool nonempty = false;
    total += lens_ncc(d, l, polarity, s.profile, nonempty);
    count += nonempty;
  }
  if (terms) *terms = count;
  return total;
}

LFLine with_shared_lambda(LFLine line, double lambda) {
  line.params[1] = line.params[3] = lambda;
  return line;
}

LineInit sweep_lambda(const LFLine& base, const PreparedStrip& s, int polarity,
                      const DetectorOptions& opt) {
  LineInit out;
  const int n = static_cast<int>(std::floor((opt.lambda_max - opt.lambda_min) / opt.lambda_step + 1e-9)) + 1;
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double lam = opt.lambda_min + k * opt.lambda_step;
    const double sc = strip_score(with_shared_lambda(base, lam), s, polarity);
    out.sweep.push_back(sc);
    if (sc > best_score) {
      best_score = sc;
      best = k;
    }
  }
  const double lo = *std::min_element(out.sweep.begin(), out.sweep.end());
  out.line = with_shared_lambda(base, opt.lambda_min + best * opt.lambda_step);
  out.score = best_score;
  out.boundary_warning = best == 0 || best == n - 1 || !(best_score > lo) || !(best_score > 0);
  return out;
}

// Hooke-Jeeves pattern search: coordinate exploration around the current
// point, then a pattern move along the last successful displacement. The
// pattern moves let the search follow the narrow diagonal valley between
// position and disparity.
RefineResult pattern_search(const LFLine& init, const PreparedStrip& s, int polarity,
                            const DetectorOptions& opt) {
  RefineResult r;
  r.line = init;
  r.initial_score = r.score = strip_score(init, s, polarity);
  r.trace.push_back(r.score);
  std::array<double, 4> step{opt.step_px, opt.step_lambda, opt.step_px, opt.step_lambda};
  const std::array<double, 4> tol{opt.tol_px, opt.tol_lambda, opt.tol_px, opt.tol_lambda};

  auto explore = [&](LFLine from, double from_score, LFLine& out, double& out_score) {
    for (int k = 0; k < 4; ++k) {
      for (int sign : {1, -1}) {
        LFLine trial = from;
        trial.params[k] += sign * step[k];
        const double sc = strip_score(trial, s, polarity);
        if (sc > from_score) {
          from = trial;
          from_score = sc;
          break;
        }
      }
    }
    out = from;
    out_score = from_score;
  };

  // Each run restarts from the best point with the initial steps; a run that
  // ends without improvement stops the search.
  for (int run = 0; run <= opt.restarts; ++run) {
    const double run_start = r.score;
    step = {opt.step_px, opt.step_lambda, opt.step_px, opt.step_lambda};
    LFLine previous = r.line;  // base before the last successful move
    bool has_previous = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      bool converged = true;
      for (int k = 0; k < 4; ++k) converged = converged && step[k] < tol[k];
      if (converged) break;

      LFLine next;
      double next_score = r.score;
      bool moved = false;
      if (has_previous) {
        LFLine pattern = r.line;
        for (int k = 0; k < 4; ++k) pattern.params[k] += r.line.params[k] - previous.params[k];
        explore(pattern, strip_score(pattern, s, polarity), next, next_score);
        moved = next_score > r.score;
      }
      if (!moved) {
        explore(r.line, r.score, next, next_score);
        moved = next_score > r.score;
      }
      if (moved) {
        previous = r.line;
        has_previous = true;
        r.line = next;
        r.score = next_score;
      } else {
        has_previous = false;
        for (double& st : step) st *= opt.contraction;
      }
      r.trace.push_back(r.score);
      ++r.iterations;
    }
    if (run > 0 && !(r.score > run_start)) break;
  }
  r.improved = r.score > r.initial_score;
  strip_score(r.line, s, polarity, &r.terms);
  return r;
}

double effective_radius(const MicroLensGrid& grid, const DetectorOptions& opt) {
  return opt.radius < 0 ? default_sub_image_radius(grid) : opt.radius;
}

// Strip selection in a frame shifted by `frame_origin`; p1, p2 are given in
// that frame. A lens sees center-view points up to |lambda| * radius away, so
// the endpoint trim grows with the expected disparity.
std::vector<LensIndex> select_strip(const MicroLensGrid& grid, int width, int height,
                                    const PixelPoint& frame_origin, const PixelPoint& p1,
                                    const PixelPoint& p2, double radius,
                                    const DetectorOptions& opt, double lambda_hint = 0.0) {
  const Eigen::Vector2d d = p2 - p1;
  const double len = d.norm();
  if (!(len > 0)) throw Error(ErrorCode::DegenerateLine, "segment endpoints coincide");
  const Eigen::Vector2d u = d / len;
  const double half_width = opt.strip_half_width * grid.pitch;
  const double margin =
      opt.endpoint_margin_scale * radius * std::max(1.0, std::abs(lambda_hint)) + 1.0;
  const double guard = radius + 0.5;
  std::vector<LensIndex> out;
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      const PixelPoint abs_c = grid.lens_center(i, j);
      if (abs_c.x() < guard || abs_c.y() < guard || abs_c.x() > width - 1 - guard ||
          abs_c.y() > height - 1 - guard) {
        continue;
      }
      const Eigen::Vector2d v = (abs_c - frame_origin) - p1;
      const double along = v.dot(u);
      const double across = std::abs(u.x() * v.y() - u.y() * v.x());
      if (across <= half_width && along >= margin && along <= len - margin) out.push_back({i, j});
    }
  }
  return out;
}

LFLine shifted(const LFLine& line, const Eigen::Vector2d& by) {
  LFLine out = line;
  if (line.orientation == Orientation::Horizontal) {
    out.fixed = {line.fixed[0] + by.x(), line.fixed[1] + by.x()};
    out.params[0] += by.y();
    out.params[2] += by.y();
  } else {
    out.fixed = {line.fixed[0] + by.y(), line.fixed[1] + by.y()};
    out.params[0] += by.x();
    out.params[2] += by.x();
  }
  return out;
}

}  // namespace

Orientation classify_orientation(const PixelPoint& p1, const PixelPoint& p2) {
  const Eigen::Vector2d d = p2 - p1;
  if (d.x() == 0 && d.y() == 0) {
    throw Error(ErrorCode::DegenerateLine, "cannot orient a segment with coincident endpoints");
  }
  return std::abs(d.y()) <= std::abs(d.x()) ? Orientation::Horizontal : Orientation::Vertical;
}

LFPoint LFLine::endpoint(int k) const {
  if (orientation == Orientation::Horizontal) return {fixed[k], params[2 * k], params[2 * k + 1]};
  return {params[2 * k], fixed[k], params[2 * k + 1]};
}

LFLine LFLine::through(const LFPoint& a, const LFPoint& b) {
  return through(classify_orientation({a.x_c_sub, a.y_c_sub}, {b.x_c_sub, b.y_c_sub}), a, b);
}

LFLine LFLine::through(Orientation o, const LFPoint& a, const LFPoint& b) {
  LFLine line;
  line.orientation = o;
  if (o == Orientation::Horizontal) {
    if (a.x_c_sub == b.x_c_sub) throw Error(ErrorCode::DegenerateLine, "horizontal line needs distinct abscissae");
    line.fixed = {a.x_c_sub, b.x_c_sub};
    line.params = {a.y_c_sub, a.lambda, b.y_c_sub, b.lambda};
  } else {
    if (a.y_c_sub == b.y_c_sub) throw Error(ErrorCode::DegenerateLine, "vertical line needs distinct ordinates");
    line.fixed = {a.y_c_sub, b.y_c_sub};
    line.params = {a.x_c_sub, a.lambda, b.x_c_sub, b.lambda};
  }
  return line;
}

Line2D slice_line(const LFLine& line, const PixelPoint& sub_center) {
  Eigen::Vector3d l;
  if (!sliced_homogeneous(line, sub_center, l)) {
    throw Error(ErrorCode::DegenerateLine, "line degenerates in this sub-image");
  }
  return {l.x(), l.y(), l.z()};
}

Line2D slice_line_sub_aperture(const LFLine& line, const PixelPoint& offset) {
  const LFPoint a = line.endpoint(0), b = line.endpoint(1);
  const Eigen::Vector3d p1(a.x_c_sub + a.lambda * offset.x(), a.y_c_sub + a.lambda * offset.y(), 1.0);
  const Eigen::Vector3d p2(b.x_c_sub + b.lambda * offset.x(), b.y_c_sub + b.lambda * offset.y(), 1.0);
  Eigen::Vector3d l = p1.cross(p2);
  const double n = std::hypot(l.x(), l.y());
  if (!(n > 0)) throw Error(ErrorCode::DegenerateLine, "sliced endpoints coincide");
  l /= n;
  return {l.x(), l.y(), l.z()};
}

SubImageWindow make_window(const SubImage& sub) {
  return {sub.center, disc_pixels(sub.center, sub.radius)};
}

Template2D make_template(const Line2D& line, const SubImage& sub, int polarity,
                         TemplateProfile shape) {
  Template2D t;
  t.window = make_window(sub);
  const std::size_t n = t.window.pixels.size();
  t.values.resize(n);
  double mean = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2i& p = t.window.pixels[k];
    t.values[k] = polarity * profile(shape, line.distance(p.x() - sub.center.x(), p.y() - sub.center.y()),
                                     line.a, line.b);
    mean += t.values[k];
  }
  if (n == 0) return t;
  mean /= n;
  double var = 0;
  for (double& v : t.values) {
    v -= mean;
    var += v * v;
  }
  t.empty = !(var > 1e-12);
  if (t.empty) std::fill(t.values.begin(), t.values.end(), 0.0);
  return t;
}

double template_ncc(const Template2D& t, const RawImage& raw) {
  if (t.empty || t.values.empty()) return 0.0;
  const std::size_t n = t.values.size();
  std::vector<double> r(n);
  double mean = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2i& p = t.window.pixels[k];
    if (p.x() < 0 || p.y() < 0 || p.x() >= raw.width() || p.y() >= raw.height()) {
      throw Error(ErrorCode::InvalidArgument, "template window leaves the sensor");
    }
    r[k] = raw.at(p.x(), p.y());
    mean += r[k];
  }
  mean /= n;
  double srr = 0, str = 0, stt = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double rv = r[k] - mean;
    srr += rv * rv;
    str += t.values[k] * rv;
    stt += t.values[k] * t.values[k];
  }
  if (srr < 1e-20 || stt < 1e-20) return 0.0;
  return std::clamp(str / std::sqrt(srr * stt), -1.0, 1.0);
}

double total_ncc(const Template4D& t, const RawImage& raw) {
  double s = 0;
  for (const Template2D& item : t.items) s += template_ncc(item, raw);
  return s;
}

std::vector<LensIndex> segment_strip(const MicroLensGrid& grid, int width, int height,
                                     const PixelPoint& p1, const PixelPoint& p2,
                                     const DetectorOptions& opt, double lambda_hint) {
  return select_strip(grid, width, height, PixelPoint::Zero(), p1, p2,
                      effective_radius(grid, opt), opt, lambda_hint);
}

Template4D build_template(const LFLine& line, const std::vector<LensIndex>& strip,
                          const RawImage& raw, const MicroLensGrid& grid, double radius,
                          int polarity, TemplateProfile shape) {
  Template4D t;
  for (const LensIndex& k : strip) {
    SubImage sub = sub_image(raw, grid, k.i, k.j, radius);
    Eigen::Vector3d l;
    if (sliced_homogeneous(line, sub.center, l)) {
      t.items.push_back(make_template({l.x(), l.y(), l.z()}, sub, polarity, shape));
    } else {
      Template2D empty;
      empty.window = make_window(sub);
      empty.values.assign(empty.window.pixels.size(), 0.0);
      t.items.push_back(std::move(empty));
    }
  }
  return t;
}

LineInit initial_lf_line(const RawImage& raw, const MicroLensGrid& grid, const PixelPoint& p1,
                         const PixelPoint& p2, int polarity, const DetectorOptions& opt) {
  const double radius = effective_radius(grid, opt);
  const LFLine base = LFLine::through({p1.x(), p1.y(), 0.0}, {p2.x(), p2.y(), 0.0});
  const auto strip = select_strip(grid, raw.width(), raw.height(), PixelPoint::Zero(), p1, p2, radius, opt);
  const PreparedStrip s = prepare_strip(strip, raw, grid, radius, PixelPoint::Zero(), opt);
  return sweep_lambda(base, s, polarity, opt);
}

RefineResult refine_lf_line(const LFLine& init, const RawImage& raw, const MicroLensGrid& grid,
                            int polarity, const DetectorOptions& opt) {
  const double radius = effective_radius(grid, opt);
  const LFPoint a = init.endpoint(0), b = init.endpoint(1);
  const auto strip =
      select_strip(grid, raw.width(), raw.height(), PixelPoint::Zero(), {a.x_c_sub, a.y_c_sub},
                   {b.x_c_sub, b.y_c_sub}, radius, opt, std::max(std::abs(a.lambda), std::abs(b.lambda)));
  const PreparedStrip s = prepare_strip(strip, raw, grid, radius, PixelPoint::Zero(), opt);
  return pattern_search(init, s, polarity, opt);
}

Intersection intersect_lf_lines(const LFLine& v, const LFLine& h, double residual_threshold,
                                double lambda_scale) {
  const std::array<LFPoint, 4> pts{v.endpoint(0), v.endpoint(1), h.endpoint(0), h.endpoint(1)};
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const LFPoint& p : pts) mean += Eigen::Vector3d(p.x_c_sub, p.y_c_sub, p.lambda);
  mean /= 4.0;
  double spread = 0;
  for (const LFPoint& p : pts) {
    spread += std::pow(p.x_c_sub - mean.x(), 2) + std::pow(p.y_c_sub - mean.y(), 2);
  }
  const double S = std::max(std::sqrt(spread / 4.0), 1e-12);
  const double Sl = S / lambda_scale;  // lambda units per normalized unit
  auto norm_point = [&](const LFPoint& p) {
    return Eigen::Vector4d((p.x_c_sub - mean.x()) / S, (p.y_c_sub - mean.y()) / S,
                           (p.lambda - mean.z()) / Sl, 1.0);
  };

  Eigen::Matrix4d planes;
  for (int line = 0; line < 2; ++line) {
    Eigen::Matrix<double, 2, 4> m;
    m.row(0) = norm_point(pts[2 * line]).transpose();
    m.row(1) = norm_point(pts[2 * line + 1]).transpose();
    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(m, Eigen::ComputeFullV);
    planes.row(2 * line) = svd.matrixV().col(2).transpose();
    planes.row(2 * line + 1) = svd.matrixV().col(3).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(planes, Eigen::ComputeFullV);
  const Eigen::Vector4d sv = svd.singularValues();
  if (sv(2) < 1e-10 * sv(0)) {
    throw Error(ErrorCode::InconsistentLines, "LF-lines span a single line (rank deficient)");
  }
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-12) throw Error(ErrorCode::PointAtInfinity, "LF-lines meet at infinity");
  Intersection out;
  out.residual = sv(3);
  if (out.residual > residual_threshold) {
    throw Error(ErrorCode::InconsistentLines, "LF-lines do not intersect (residual " +
                                                  std::to_string(out.residual) + ")");
  }
  out.point = {X(0) / X(3) * S + mean.x(), X(1) / X(3) * S + mean.y(),
               X(2) / X(3) * Sl + mean.z()};
  return out;
}

int DetectedBoard::valid_count() const {
  return static_cast<int>(std::count_if(corners.begin(), corners.end(),
                                        [](const DetectedCorner& c) { return c.valid; }));
}

DetectedBoard detect_board(const RawImage& raw, const MicroLensGrid& grid,
                           const CheckerboardSpec& spec, const DetectorOptions& opt) {
  grid.validate();
  spec.validate();
  const double radius = effective_radius(grid, opt);
  const Image2D view = lens_mean_image(raw, grid, radius);
  const BoardTopology topo = order_board(find_saddle_points(view, grid, opt.saddle), spec);

  DetectedBoard board;
  board.rows = spec.rows;
  board.cols = spec.cols;

  // Segments between neighbouring corners: along rows (j -> j+1), then along
  // columns (i -> i+1).
  for (int i = 0; i < spec.rows; ++i) {
    for (int j = 0; j + 1 < spec.cols; ++j) board.segments.push_back({i, j, i, j + 1, {}, {}, 1, false});
  }
  for (int i = 0; i + 1 < spec.rows; ++i) {
    for (int j = 0; j < spec.cols; ++j) board.segments.push_back({i, j, i + 1, j, {}, {}, 1, false});
  }

  // Polarity: board parity fixes each segment up to one global sign, taken
  // from a vote over the lens-mean view.
  auto parity_sign = [](const SegmentResult& s) {
    const bool odd = (s.i0 + s.j0) % 2 != 0;
    const bool along_row = s.i0 == s.i1;
    return along_row ? (odd ? 1 : -1) : (odd ? -1 : 1);
  };
  double vote = 0;
  for (const SegmentResult& s : board.segments) {
    const auto& a = topo.at(s.i0, s.j0);
    const auto& b = topo.at(s.i1, s.j1);
    if (!a || !b) continue;
    const Eigen::Vector2d d = b->position - a->position;
    const Eigen::Vector2d n = Eigen::Vector2d(-d.y(), d.x()) * 0.25;
    const PixelPoint mid = 0.5 * (a->position + b->position);
    auto sample = [&](const PixelPoint& p) {
      const Eigen::Vector2d rc = grid.fractional_index(p);
      return view.sample(rc.y(), rc.x());
    };
    const double diff = sample(mid + n) - sample(mid - n);
    vote += (diff > 0 ? 1 : (diff < 0 ? -1 : 0)) * parity_sign(s);
  }
  const int phase = vote < 0 ? -1 : 1;

  parallel_for(
      board.segments.size(),
      [&](std::size_t k) {
        SegmentResult& s = board.segments[k];
        const auto& a = topo.at(s.i0, s.j0);
        const auto& b = topo.at(s.i1, s.j1);
        if (!a || !b) return;
        s.polarity = phase * parity_sign(s);
        // Work relative to the first endpoint's anchor lens.
        const PixelPoint origin = grid.lens_center(a->anchor.i, a->anchor.j);
        const PixelPoint p1 = a->offset;
        const PixelPoint p2 = (grid.lens_center(b->anchor.i, b->anchor.j) - origin) + b->offset;
        const auto strip = select_strip(grid, raw.width(), raw.height(), origin, p1, p2, radius, opt);
        const PreparedStrip prepared = prepare_strip(strip, raw, grid, radius, origin, opt);
        const LFLine base = LFLine::through({p1.x(), p1.y(), 0.0}, {p2.x(), p2.y(), 0.0});
        s.init = sweep_lambda(base, prepared, s.polarity, opt);
        const double hint = std::abs(s.init.line.params[1]);
        if (hint > 1.0) {
          const auto trimmed =
              select_strip(grid, raw.width(), raw.height(), origin, p1, p2, radius, opt, hint);
          s.refine = pattern_search(s.init.line, prepare_strip(trimmed, raw, grid, radius, origin, opt),
                                    s.polarity, opt);
        } else {
          s.refine = pattern_search(s.init.line, prepared, s.polarity, opt);
        }
        s.ok = s.refine.terms >= opt.min_terms &&
               s.refine.score >= opt.min_mean_ncc * s.refine.terms;
      },
      opt.threads);

  // Segment lookup by its endpoints.
  auto find_segment = [&](int i0, int j0, int i1, int j1) -> const SegmentResult* {
    for (const SegmentResult& s : board.segments) {
      if (s.i0 == i0 && s.j0 == j0 && s.i1 == i1 && s.j1 == j1) return s.ok ? &s : nullptr;
    }
    return nullptr;
  };

  board.corners.resize(spec.corner_count());
  for (int i = 0; i < spec.rows; ++i) {
    for (int j = 0; j < spec.cols; ++j) {
      DetectedCorner& c = board.corners[i * spec.cols + j];
      c.i = i;
      c.j = j;
      const auto& coarse = topo.at(i, j);
      if (!coarse) continue;
      const PixelPoint origin = grid.lens_center(coarse->anchor.i, coarse->anchor.j);
      c.point = {coarse->position.x(), coarse->position.y(), 0.0};

      std::vector<const SegmentResult*> along_row, along_col;
      if (auto* s = find_segment(i, j - 1, i, j)) along_row.push_back(s);
      if (auto* s = find_segment(i, j, i, j + 1)) along_row.push_back(s);
      if (auto* s = find_segment(i - 1, j, i, j)) along_col.push_back(s);
      if (auto* s = find_segment(i, j, i + 1, j)) along_col.push_back(s);

      auto to_corner_frame = [&](const SegmentResult* s) {
        const auto& a = topo.at(s->i0, s->j0);
        return shifted(s->refine.line, grid.lens_center(a->anchor.i, a->anchor.j) - origin);
      };
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      int used = 0;
      double worst = 0, score = 0;
      int score_terms = 0;
      for (const SegmentResult* r : along_row) {
        for (const SegmentResult* q : along_col) {
          try {
            const Intersection x = intersect_lf_lines(to_corner_frame(q), to_corner_frame(r),
                                                      std::numeric_limits<double>::infinity());
            acc += Eigen::Vector3d(x.point.x_c_sub, x.point.y_c_sub, x.point.lambda);
            worst = std::max(worst, x.residual);
            ++used;
          } catch (const Error&) {
          }
        }
      }
      for (const SegmentResult* s : along_row) score += s->refine.score, score_terms += s->refine.terms;
      for (const SegmentResult* s : along_col) score += s->refine.score, score_terms += s->refine.terms;
      if (used == 0) continue;
      acc /= used;
      c.point = {origin.x() + acc.x(), origin.y() + acc.y(), acc.z()};
      c.residual = worst;
      c.score = score_terms > 0 ? score / score_terms : 0.0;
      c.valid = worst <= opt.residual_threshold;
    }
  }
  return board;
}

}  // namespace lfcal
