#include "lfcal/raw_image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include <Eigen/Dense>

#include "lfcal/error.hpp"

namespace lfcal {

namespace {

constexpr double kHexRowFactor = 0.8660254037844386;  // sqrt(3) / 2

double bilinear_zero(const RawImage& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto px = [&](int xx, int yy) -> double {
    if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) return 0.0;
    return img.at(xx, yy);
  };
  if (fx == 0.0 && fy == 0.0) return px(x0, y0);
  return (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) +
         (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1);
}

}  // namespace

RawImage::RawImage(int width, int height, float fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "raw image must have positive size");
  }
  if (!(fill >= 0.0f && fill <= 1.0f)) {
    throw Error(ErrorCode::InvalidArgument, "raw intensities must lie in [0, 1]");
  }
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

RawImage::RawImage(int width, int height, std::vector<float> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0 ||
      pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::InvalidArgument, "raw image size does not match pixel count");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::InvalidArgument, "raw intensities must lie in [0, 1]");
    }
  }
}

double RawImage::sample(double x, double y) const { return bilinear_zero(*this, x, y); }

double Image2D::sample(double x, double y) const {
  x = std::clamp(x, 0.0, width - 1.0);
  y = std::clamp(y, 0.0, height - 1.0);
  const int x0 = std::min(static_cast<int>(x), width - 1);
  const int y0 = std::min(static_cast<int>(y), height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x1, y0) +
         (1 - fx) * fy * at(x0, y1) + fx * fy * at(x1, y1);
}

// ---------------------------------------------------------------------------
// MicroLensGrid

void MicroLensGrid::validate() const {
  if (!(pitch > 1.0) || !std::isfinite(pitch)) {
    throw Error(ErrorCode::InvalidArgument, "micro-lens pitch must exceed one pixel");
  }
  if (rows <= 0 || cols <= 0) {
    throw Error(ErrorCode::InvalidArgument, "micro-lens grid needs positive rows and cols");
  }
  if (!std::isfinite(rotation) || !origin.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "micro-lens grid placement must be finite");
  }
}

PixelPoint MicroLensGrid::lens_center(int i, int j) const {
  if (i < 0 || j < 0 || i >= rows || j >= cols) {
    throw Error(ErrorCode::IndexOutOfRange,
                "lens index (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  }
  double u = j * pitch;
  double v = i * pitch;
  if (layout == GridLayout::Hexagonal) {
    if (i % 2 == 1) u += 0.5 * pitch;
    v = i * pitch * kHexRowFactor;
  }
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  return origin + PixelPoint(c * u - s * v, s * u + c * v);
}

PixelPoint MicroLensGrid::lens_center_fractional(double i, double j) const {
  const double u = j * pitch;
  const double v = i * pitch;
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  return origin + PixelPoint(c * u - s * v, s * u + c * v);
}

Eigen::Vector2d MicroLensGrid::fractional_index(const PixelPoint& p) const {
  const PixelPoint d = p - origin;
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const double u = c * d.x() + s * d.y();
  const double v = -s * d.x() + c * d.y();
  return {v / pitch, u / pitch};
}

LensIndex MicroLensGrid::nearest_lens(const PixelPoint& p) const {
  const PixelPoint d = p - origin;
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const double u = (c * d.x() + s * d.y()) / pitch;
  const double v = (-s * d.x() + c * d.y()) / pitch;

  LensIndex best{0, 0};
  double best_d2 = std::numeric_limits<double>::infinity();
  auto consider = [&](int i, int j) {
    const PixelPoint q = lens_center(i, j);
    const double d2 = (q - p).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = {i, j};
    }
  };

  if (layout == GridLayout::Rectangular) {
    const int i0 = std::clamp(static_cast<int>(std::floor(v)), 0, rows - 1);
    const int j0 = std::clamp(static_cast<int>(std::floor(u)), 0, cols - 1);
    const int i1 = std::min(i0 + 1, rows - 1);
    const int j1 = std::min(j0 + 1, cols - 1);
    consider(i0, j0);
    if (j1 != j0) consider(i0, j1);
    if (i1 != i0) {
      consider(i1, j0);
      if (j1 != j0) consider(i1, j1);
    }
    return best;
  }

  const int r0 = static_cast<int>(std::lround(v / kHexRowFactor));
  for (int i = std::max(r0 - 1, 0); i <= std::min(r0 + 1, rows - 1); ++i) {
    const double uj = u - (i % 2 == 1 ? 0.5 : 0.0);
    const int j0 = std::clamp(static_cast<int>(std::floor(uj)), 0, cols - 1);
    const int j1 = std::min(j0 + 1, cols - 1);
    consider(i, j0);
    if (j1 != j0) consider(i, j1);
  }
  return best;
}

bool MicroLensGrid::center_in_bounds(int i, int j, int width, int height) const {
  const PixelPoint c = lens_center(i, j);
  return c.x() >= 0.0 && c.y() >= 0.0 && c.x() <= width - 1.0 && c.y() <= height - 1.0;
}

SubImage sub_image(const RawImage& raw, const MicroLensGrid& grid, int i, int j, double radius) {
  if (radius > 0.5 * grid.pitch) {
    throw Error(ErrorCode::InvalidArgument, "sub-image radius exceeds half the pitch");
  }
  return {grid.lens_center(i, j), radius, &raw};
}

std::vector<Eigen::Vector2i> disc_offsets(double radius) {
  std::vector<Eigen::Vector2i> out;
  const int r = static_cast<int>(std::floor(radius));
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) out.emplace_back(dx, dy);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Derived views

Image2D center_view_image(const RawImage& raw, const MicroLensGrid& grid) {
  grid.validate();
  Image2D out(grid.cols, grid.rows, 0.0);
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      const PixelPoint c = grid.lens_center(i, j);
      if (raw.contains(c.x(), c.y())) out.at(j, i) = raw.sample(c.x(), c.y());
    }
  }
  return out;
}

Image2D lens_mean_image(const RawImage& raw, const MicroLensGrid& grid, double radius) {
  grid.validate();
  const auto offsets = disc_offsets(radius);
  Image2D out(grid.cols, grid.rows, 0.0);
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      const PixelPoint c = grid.lens_center(i, j);
      if (!raw.contains(c.x(), c.y())) continue;
      const bool integral = c.x() == std::round(c.x()) && c.y() == std::round(c.y());
      double acc = 0.0;
      for (const auto& o : offsets) {
        if (integral) {
          const int x = static_cast<int>(c.x()) + o.x();
          const int y = static_cast<int>(c.y()) + o.y();
          if (x >= 0 && y >= 0 && x < raw.width() && y < raw.height()) acc += raw.at(x, y);
        } else {
          acc += raw.sample(c.x() + o.x(), c.y() + o.y());
        }
      }
      out.at(j, i) = acc / static_cast<double>(offsets.size());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// White-image lattice estimation

namespace {

struct Peak {
  PixelPoint p;
  double value;
};

std::vector<Peak> find_peaks(const RawImage& img) {
  float vmax = 0.0f;
  for (float v : img.pixels()) vmax = std::max(vmax, v);
  std::vector<Peak> peaks;
  if (vmax <= 0.0f) return peaks;
  const float threshold = 0.3f * vmax;
  for (int y = 2; y < img.height() - 2; ++y) {
    for (int x = 2; x < img.width() - 2; ++x) {
      const float v = img.at(x, y);
      if (v < threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float n = img.at(x + dx, y + dy);
          // earlier raster neighbors must be strictly lower, later ones not higher
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (earlier ? n >= v : n > v) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      // Gaussian peak: quadratic fit to log intensity along each axis.
      auto lg = [&](int xx, int yy) { return std::log(std::max(img.at(xx, yy), 1e-6f)); };
      const double c0 = lg(x, y);
      const double dxn = lg(x - 1, y), dxp = lg(x + 1, y);
      const double dyn = lg(x, y - 1), dyp = lg(x, y + 1);
      const double denx = dxn - 2 * c0 + dxp;
      const double deny = dyn - 2 * c0 + dyp;
      double ox = denx < 0 ? 0.5 * (dxn - dxp) / denx : 0.0;
      double oy = deny < 0 ? 0.5 * (dyn - dyp) / deny : 0.0;
      ox = std::clamp(ox, -0.5, 0.5);
      oy = std::clamp(oy, -0.5, 0.5);
      peaks.push_back({PixelPoint(x + ox, y + oy), v});
    }
  }
  return peaks;
}

// Nearest-neighbor distance for every peak via a uniform bucket grid.
std::vector<double> nearest_neighbor_distances(const std::vector<Peak>& peaks, double cell,
                                               std::vector<std::vector<int>>* neighbors,
                                               double neighbor_radius) {
  std::unordered_map<long long, std::vector<int>> buckets;
  auto key = [&](int bx, int by) { return (static_cast<long long>(bx) << 32) ^ (by & 0xffffffff); };
  for (int k = 0; k < static_cast<int>(peaks.size()); ++k) {
    const int bx = static_cast<int>(std::floor(peaks[k].p.x() / cell));
    const int by = static_cast<int>(std::floor(peaks[k].p.y() / cell));
    buckets[key(bx, by)].push_back(k);
  }
  std::vector<double> nn(peaks.size(), std::numeric_limits<double>::infinity());
  if (neighbors) neighbors->assign(peaks.size(), {});
  const int reach = std::max(1, static_cast<int>(std::ceil(neighbor_radius / cell)));
  for (int k = 0; k < static_cast<int>(peaks.size()); ++k) {
    const int bx = static_cast<int>(std::floor(peaks[k].p.x() / cell));
    const int by = static_cast<int>(std::floor(peaks[k].p.y() / cell));
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        auto it = buckets.find(key(bx + dx, by + dy));
        if (it == buckets.end()) continue;
        for (int m : it->second) {
          if (m == k) continue;
          const double d = (peaks[m].p - peaks[k].p).norm();
          nn[k] = std::min(nn[k], d);
          if (neighbors && d <= neighbor_radius) (*neighbors)[k].push_back(m);
        }
      }
    }
  }
  return nn;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

// Lattice coordinates (in pitch units) of index (I, J).
Eigen::Vector2d lattice_coords(GridLayout layout, int I, int J) {
  if (layout == GridLayout::Hexagonal) {
    return {J + ((I % 2 + 2) % 2 == 1 ? 0.5 : 0.0), I * kHexRowFactor};
  }
  return {static_cast<double>(J), static_cast<double>(I)};
}

}  // namespace

GridEstimate estimate_grid_from_white_image(const RawImage& white, GridLayout layout) {
  const auto peaks = find_peaks(white);
  if (peaks.size() < 16) {
    throw Error(ErrorCode::EstimationFailure,
                "white image shows " + std::to_string(peaks.size()) +
                    " micro-lens maxima; at least 16 are required");
  }

  // Spacing guess from peak density, then the median nearest-neighbor distance.
  const double density_spacing =
      std::sqrt(static_cast<double>(white.width()) * white.height() / peaks.size());
  const auto nn0 = nearest_neighbor_distances(peaks, density_spacing, nullptr, 2 * density_spacing);
  std::vector<double> finite_nn;
  for (double d : nn0) {
    if (std::isfinite(d)) finite_nn.push_back(d);
  }
  if (finite_nn.size() < 16) {
    throw Error(ErrorCode::EstimationFailure, "micro-lens maxima are too sparse");
  }
  const double pitch0 = median(finite_nn);

  std::vector<std::vector<int>> neighbors;
  nearest_neighbor_distances(peaks, pitch0, &neighbors, 1.25 * pitch0);

  const int fold = layout == GridLayout::Hexagonal ? 6 : 4;
  double sc = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    for (int m : neighbors[k]) {
      const PixelPoint d = peaks[m].p - peaks[k].p;
      if (d.norm() < 0.75 * pitch0) continue;
      const double a = fold * std::atan2(d.y(), d.x());
      sc += std::cos(a);
      ss += std::sin(a);
    }
  }
  const double theta0 = std::atan2(ss, sc) / fold;

  // Reference peak near the image center.
  const PixelPoint mid(0.5 * (white.width() - 1), 0.5 * (white.height() - 1));
  std::size_t ref = 0;
  for (std::size_t k = 1; k < peaks.size(); ++k) {
    if ((peaks[k].p - mid).squaredNorm() < (peaks[ref].p - mid).squaredNorm()) ref = k;
  }

  const double c0 = std::cos(theta0), s0 = std::sin(theta0);
  auto rotated = [&](const PixelPoint& p) {
    const PixelPoint d = p - peaks[ref].p;
    return Eigen::Vector2d((c0 * d.x() + s0 * d.y()) / pitch0, (-s0 * d.x() + c0 * d.y()) / pitch0);
  };

  struct Assigned {
    int I, J;
    PixelPoint p;
  };
  std::vector<Assigned> assigned;
  assigned.reserve(peaks.size());
  const double border = 0.5 * pitch0;
  for (const auto& pk : peaks) {
    if (pk.p.x() < border || pk.p.y() < border || pk.p.x() > white.width() - 1 - border ||
        pk.p.y() > white.height() - 1 - border) {
      continue;
    }
    const Eigen::Vector2d q = rotated(pk.p);
    int I, J;
    if (layout == GridLayout::Hexagonal) {
      // Labels are relative to the reference peak, whose row is taken as even.
      // The point set is the same either way, and rows are re-based by an
      // even amount below so the odd-row offset convention survives.
      I = static_cast<int>(std::lround(q.y() / kHexRowFactor));
      const int parity = (I % 2 + 2) % 2;
      J = static_cast<int>(std::lround(q.x() - 0.5 * parity));
    } else {
      I = static_cast<int>(std::lround(q.y()));
      J = static_cast<int>(std::lround(q.x()));
    }
    assigned.push_back({I, J, pk.p});
  }
  if (assigned.size() < 16) {
    throw Error(ErrorCode::EstimationFailure, "too few interior micro-lens maxima");
  }

  // Linear fit: p = o + [a -b; b a] * lattice(I, J).
  auto fit = [&](const std::vector<Assigned>& pts, double* rms) {
    Eigen::MatrixXd A(2 * pts.size(), 4);
    Eigen::VectorXd b(2 * pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Eigen::Vector2d g = lattice_coords(layout, pts[k].I, pts[k].J);
      A.row(2 * k) << 1, 0, g.x(), -g.y();
      A.row(2 * k + 1) << 0, 1, g.y(), g.x();
      b(2 * k) = pts[k].p.x();
      b(2 * k + 1) = pts[k].p.y();
    }
    const Eigen::Vector4d x = A.colPivHouseholderQr().solve(b);
    const Eigen::VectorXd r = A * x - b;
    *rms = std::sqrt(r.squaredNorm() / pts.size());
    return x;
  };

  double rms = 0.0;
  Eigen::Vector4d sol = fit(assigned, &rms);

  // Drop gross outliers (mis-assigned maxima) once and refit.
  {
    std::vector<Assigned> kept;
    for (const auto& a : assigned) {
      const Eigen::Vector2d g = lattice_coords(layout, a.I, a.J);
      const PixelPoint pred(sol(0) + sol(2) * g.x() - sol(3) * g.y(),
                            sol(1) + sol(3) * g.x() + sol(2) * g.y());
      if ((pred - a.p).norm() < 0.25 * pitch0) kept.push_back(a);
    }
    if (kept.size() >= 16 && kept.size() < assigned.size()) {
      assigned = std::move(kept);
      sol = fit(assigned, &rms);
    }
  }

  const double pitch = std::hypot(sol(2), sol(3));
  const double theta = std::atan2(sol(3), sol(2));
  const PixelPoint o(sol(0), sol(1));

  // Index range covering every center that falls on the sensor.
  const double c = std::cos(theta), s = std::sin(theta);
  auto center_of = [&](int I, int J) {
    const Eigen::Vector2d g = lattice_coords(layout, I, J) * pitch;
    return PixelPoint(o.x() + c * g.x() - s * g.y(), o.y() + s * g.x() + c * g.y());
  };
  int imin = std::numeric_limits<int>::max(), imax = std::numeric_limits<int>::min();
  int jmin = imin, jmax = imax;
  const int span = static_cast<int>(std::ceil((white.width() + white.height()) / pitch)) + 2;
  for (int I = -span; I <= span; ++I) {
    for (int J = -span; J <= span; ++J) {
      const PixelPoint q = center_of(I, J);
      if (q.x() < 0 || q.y() < 0 || q.x() > white.width() - 1 || q.y() > white.height() - 1) continue;
      imin = std::min(imin, I);
      imax = std::max(imax, I);
      jmin = std::min(jmin, J);
      jmax = std::max(jmax, J);
    }
  }
  if (layout == GridLayout::Hexagonal && ((imin % 2) + 2) % 2 == 1) --imin;

  GridEstimate est;
  est.grid.layout = layout;
  est.grid.pitch = pitch;
  est.grid.rotation = theta;
  est.grid.origin = center_of(imin, jmin);
  est.grid.rows = imax - imin + 1;
  est.grid.cols = jmax - jmin + 1;
  est.residual_rms = rms;
  est.maxima_used = static_cast<int>(assigned.size());
  return est;
}

}  // namespace lfcal
