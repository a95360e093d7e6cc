#include "lfcal/synthetic_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "lfcal/error.hpp"
#include "lfcal/parallel.hpp"

namespace lfcal {

namespace {

// splitmix64 finalizer; used as a counter-based generator.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Standard normal draw keyed by (seed, index).
double gaussian_at(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t a = mix64(seed ^ mix64(2 * index));
  const std::uint64_t b = mix64(seed ^ mix64(2 * index + 1));
  const double u1 = to_unit_open(a);
  const double u2 = to_unit_open(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Sensor position (mm, relative to the optical axis) of a raw pixel coordinate.
Eigen::Vector2d sensor_mm(const PhysicalCameraParams& cam, const PixelPoint& p) {
  return {cam.d_pix * (p.x() - cam.c_x), cam.d_pix * (p.y() - cam.c_y)};
}

// Disparity of a scene depth, from the thin-lens image distance and the
// similar triangles between the MLA pinholes and the sensor.
double geometric_disparity(const PhysicalCameraParams& cam, double Z) {
  return (cam.L + cam.l) / cam.l * (cam.L * (1.0 / cam.F - 1.0 / Z) - 1.0);
}

// Center-view image of a camera-frame point: the undeviated ray through the
// main-lens center reaches the sensor at -(L + l) * X / Z.
PixelPoint geometric_center_view(const PhysicalCameraParams& cam, const ScenePoint& P) {
  const double k = -(cam.L + cam.l) / cam.d_pix;
  return {cam.c_x + k * P.x() / P.z(), cam.c_y + k * P.y() / P.z()};
}

SarbIntrinsics pinhole_of(const PhysicalCameraParams& cam) {
  SarbIntrinsics intr;
  intr.f_x = intr.f_y = -(cam.L + cam.l) / cam.d_pix;
  intr.c_x = cam.c_x;
  intr.c_y = cam.c_y;
  return intr;
}

// Nearest sub-image center; fast path for rectangular lattices.
class CenterLookup {
 public:
  explicit CenterLookup(const MicroLensGrid& grid)
      : grid_(grid), cos_(std::cos(grid.rotation)), sin_(std::sin(grid.rotation)) {}

  PixelPoint nearest(const PixelPoint& p) const {
    if (grid_.layout != GridLayout::Rectangular) {
      const LensIndex k = grid_.nearest_lens(p);
      return grid_.lens_center(k.i, k.j);
    }
    const PixelPoint d = p - grid_.origin;
    const double u = (cos_ * d.x() + sin_ * d.y()) / grid_.pitch;
    const double v = (-sin_ * d.x() + cos_ * d.y()) / grid_.pitch;
    const int j = std::clamp(static_cast<int>(std::lround(u)), 0, grid_.cols - 1);
    const int i = std::clamp(static_cast<int>(std::lround(v)), 0, grid_.rows - 1);
    const double cu = j * grid_.pitch;
    const double cv = i * grid_.pitch;
    return grid_.origin + PixelPoint(cos_ * cu - sin_ * cv, sin_ * cu + cos_ * cv);
  }

 private:
  const MicroLensGrid& grid_;
  double cos_, sin_;
};

// Board-plane coordinates hit by an outward ray, or false when it misses.
bool hit_board(const Pose& pose, const Ray4& r, Eigen::Vector2d& b) {
  const Eigen::Vector3d origin(r.s, r.t, 0.0);
  const Eigen::Vector3d dir(r.u, r.v, 1.0);
  const Eigen::Vector3d n = pose.R.col(2);
  const double denom = n.dot(dir);
  if (std::abs(denom) < 1e-15) return false;
  const double depth = n.dot(pose.T - origin) / denom;
  if (!(depth > 0.0)) return false;
  const Eigen::Vector3d local = pose.R.transpose() * (origin + depth * dir - pose.T);
  b = local.head<2>();
  return true;
}

// Board point whose distorted light field reaches the pixel at `p` under the
// lens centered at `c`: solves D(x_u(Q)) + lambda(Q) * (p - c) = c by Newton
// over board coordinates, starting from the undistorted trace.
bool solve_distorted(const RenderConfig& cfg, const Pose& pose, const SarbIntrinsics& pin,
                     const PixelPoint& p, const PixelPoint& c, Eigen::Vector2d& b) {
  auto residual = [&](const Eigen::Vector2d& q, Eigen::Vector2d& out) {
    const ScenePoint P = pose.R.col(0) * q.x() + pose.R.col(1) * q.y() + pose.T;
    if (!(P.z() > 0.0)) return false;
    const PixelPoint xu = geometric_center_view(cfg.cam, P);
    const PixelPoint xd = denormalize(apply_distortion(normalize(xu, pin), cfg.distortion), pin);
    out = xd + geometric_disparity(cfg.cam, P.z()) * (p - c) - c;
    return true;
  };
  Eigen::Vector2d r;
  for (int it = 0; it < 30; ++it) {
    if (!residual(b, r)) return false;
    if (r.norm() < 1e-10) return true;
    const double h = 1e-4;
    Eigen::Matrix2d J;
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d qp = b, qm = b, rp, rm;
      qp[k] += h;
      qm[k] -= h;
      if (!residual(qp, rp) || !residual(qm, rm)) return false;
      J.col(k) = (rp - rm) / (2 * h);
    }
    const Eigen::Vector2d step = J.fullPivLu().solve(r);
    if (!step.allFinite()) return false;
    b -= step;
    if (step.norm() < 1e-12) return true;
  }
  return residual(b, r) && r.norm() < 1e-6;
}

}  // namespace

void SceneBoard::validate() const {
  spec.validate();
  if (orthonormality_error(pose.R) > 1e-9 || pose.R.determinant() < 0) {
    throw Error(ErrorCode::InvalidArgument, "board rotation is not a proper rotation");
  }
  const double c = spec.cell_size;
  const double x0 = -2 * c, x1 = (spec.cols + 1) * c;
  const double y0 = -2 * c, y1 = (spec.rows + 1) * c;
  for (const Eigen::Vector2d& q : {Eigen::Vector2d(x0, y0), Eigen::Vector2d(x1, y0),
                                  Eigen::Vector2d(x0, y1), Eigen::Vector2d(x1, y1)}) {
    corner_depth(pose, q);  // throws BehindCamera
  }
}

void RenderConfig::validate() const {
  cam.validate();
  grid.validate();
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "render size must be positive");
  }
  if (samples_per_pixel < 1 || aperture_samples < 1) {
    throw Error(ErrorCode::InvalidArgument, "sample counts must be at least 1");
  }
  if (!(noise_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
  }
  for (double v : {black, white, background}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "board intensities must lie in [0, 1]");
    }
  }
}

Ray4 trace_pixel_ray(const PhysicalCameraParams& cam, const PixelPoint& sensor_point,
                     const PixelPoint& sub_center) {
  // Pinhole sits on the line from the main-lens center to the sub-image center.
  const Eigen::Vector2d S = sensor_mm(cam, sensor_point);
  const Eigen::Vector2d m = sensor_mm(cam, sub_center) * (cam.L / (cam.L + cam.l));
  // Slope per unit Z from the sensor (Z = -(L+l)) to the pinhole (Z = -L).
  const Eigen::Vector2d slope = (m - S) / cam.l;
  const Eigen::Vector2d at_lens = S + slope * (cam.L + cam.l);
  // Thin lens: a ray crossing at height h is bent by -h / F.
  const Eigen::Vector2d out = slope - at_lens / cam.F;
  return {at_lens.x(), at_lens.y(), out.x(), out.y()};
}

double board_intensity(const CheckerboardSpec& spec, double bx, double by,
                       const RenderConfig& cfg) {
  const long a = static_cast<long>(std::floor(bx / spec.cell_size));
  const long b = static_cast<long>(std::floor(by / spec.cell_size));
  if (a >= -1 && a <= spec.cols - 1 && b >= -1 && b <= spec.rows - 1) {
    return ((a + b) % 2 == 0) ? cfg.black : cfg.white;
  }
  if (a >= -2 && a <= spec.cols && b >= -2 && b <= spec.rows) return cfg.white;
  return cfg.background;
}

namespace {

std::vector<double> lattice_offsets(int samples, int aperture) {
  const int n = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(samples)) - 1e-9));
  const int per_axis = n * aperture;
  std::vector<double> offsets(per_axis);
  for (int k = 0; k < per_axis; ++k) offsets[k] = (k + 0.5) / per_axis - 0.5;
  return offsets;
}

}  // namespace

RawImage render(const SceneBoard& board, const RenderConfig& cfg) {
  board.validate();
  cfg.validate();
  const std::vector<double> base = lattice_offsets(cfg.samples_per_pixel, cfg.aperture_samples);
  const bool adaptive = cfg.edge_samples_per_pixel > cfg.samples_per_pixel;
  const std::vector<double> fine =
      adaptive ? lattice_offsets(cfg.edge_samples_per_pixel, cfg.aperture_samples) : base;

  const CenterLookup lookup(cfg.grid);
  const SarbIntrinsics pin = pinhole_of(cfg.cam);
  const bool distorted = !cfg.distortion.is_zero();
  std::vector<float> px(static_cast<std::size_t>(cfg.width) * cfg.height);

  auto shade = [&](double x, double y) {
    const PixelPoint p(x, y);
    const PixelPoint c = lookup.nearest(p);
    Eigen::Vector2d b;
    bool ok = hit_board(board.pose, trace_pixel_ray(cfg.cam, p, c), b);
    if (ok && distorted) ok = solve_distorted(cfg, board.pose, pin, p, c, b);
    return ok ? board_intensity(board.spec, b.x(), b.y(), cfg) : cfg.background;
  };
  auto integrate = [&](int x, int y, const std::vector<double>& offsets, double& lo, double& hi) {
    double acc = 0.0;
    lo = 1e300;
    hi = -1e300;
    for (double oy : offsets) {
      for (double ox : offsets) {
        const double v = shade(x + ox, y + oy);
        acc += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    return acc / static_cast<double>(offsets.size() * offsets.size());
  };

  // Any straight edge that touches the pixel square crosses its boundary, and
  // within one pixel the board maps affinely, so a uniform boundary ring
  // means a uniform pixel.
  const int ring_n = static_cast<int>(base.size());
  auto uniform_ring = [&](int x, int y, double& value) {
    value = shade(x - 0.5, y - 0.5);
    for (int k = 0; k < ring_n; ++k) {
      const double t = -0.5 + static_cast<double>(k) / ring_n;
      const double u = -t;
      if (shade(x + t + 1.0 / ring_n, y - 0.5) != value) return false;
      if (shade(x + 0.5, y + t + 1.0 / ring_n) != value) return false;
      if (shade(x + u - 1.0 / ring_n, y + 0.5) != value) return false;
      if (shade(x - 0.5, y + u - 1.0 / ring_n) != value) return false;
    }
    return true;
  };

  parallel_for(
      static_cast<std::size_t>(cfg.height),
      [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < cfg.width; ++x) {
          double v, lo, hi;
          if (!adaptive) {
            v = integrate(x, y, base, lo, hi);
          } else if (!uniform_ring(x, y, v)) {
            v = integrate(x, y, fine, lo, hi);
          }
          px[row * cfg.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      },
      cfg.threads);

  RawImage img(cfg.width, cfg.height, std::move(px));
  if (cfg.noise_sigma > 0.0) add_noise(img, cfg.noise_sigma, cfg.seed, cfg.threads);
  return img;
}

void add_noise(RawImage& img, double sigma, std::uint64_t seed, int threads) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
  auto px = img.pixels();
  const std::uint64_t key = mix64(seed + 0x632be59bd9b4e019ULL);
  parallel_for(
      px.size(),
      [&](std::size_t k) {
        const double v = px[k] + sigma * gaussian_at(key, k);
        px[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      },
      threads);
}

std::vector<LFPoint> analytic_corner_lf_points(const SceneBoard& board,
                                               const PhysicalCameraParams& cam,
                                               const DistortionCoeffs& distortion) {
  cam.validate();
  board.spec.validate();
  const SarbIntrinsics pin = pinhole_of(cam);
  std::vector<LFPoint> out;
  out.reserve(board.spec.corner_count());
  for (int i = 0; i < board.spec.rows; ++i) {
    for (int j = 0; j < board.spec.cols; ++j) {
      const ScenePoint P = corner_depth(board.pose, board.spec.corner(i, j));
      PixelPoint x = geometric_center_view(cam, P);
      if (!distortion.is_zero()) {
        x = denormalize(apply_distortion(normalize(x, pin), distortion), pin);
      }
      out.push_back({x.x(), x.y(), geometric_disparity(cam, P.z())});
    }
  }
  return out;
}

RawImage render_white_image(const MicroLensGrid& grid, int width, int height,
                            double sigma_fraction) {
  grid.validate();
  if (width <= 0 || height <= 0 || !(sigma_fraction > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid white-image request");
  }
  const double sigma = sigma_fraction * grid.pitch;
  const double inv = 1.0 / (2 * sigma * sigma);
  const CenterLookup lookup(grid);
  RawImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const PixelPoint p(x, y);
      const double d2 = (lookup.nearest(p) - p).squaredNorm();
      img.at(x, y) = static_cast<float>(0.95 * std::exp(-d2 * inv));
    }
  }
  return img;
}

}  // namespace lfcal
