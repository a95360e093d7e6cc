#include "lfcal/coarse_corners.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>

#include <Eigen/Dense>

#include "lfcal/error.hpp"

namespace lfcal {

namespace {

Image2D gaussian_blur(const Image2D& in, double sigma) {
  if (sigma <= 0) return in;
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int d = -r; d <= r; ++d) sum += k[d + r] = std::exp(-0.5 * d * d / (sigma * sigma));
  for (double& v : k) v /= sum;

  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  Image2D tmp(in.width, in.height), out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0;
      for (int d = -r; d <= r; ++d) acc += k[d + r] * in.at(clampi(x + d, in.width), y);
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double acc = 0;
      for (int d = -r; d <= r; ++d) acc += k[d + r] * tmp.at(x, clampi(y + d, in.height));
      out.at(x, y) = acc;
    }
  }
  return out;
}

struct LocalQuadratic {
  Eigen::Vector2d g;
  Eigen::Matrix2d H;
};

LocalQuadratic quadratic_at(const Image2D& s, int x, int y) {
  LocalQuadratic q;
  q.g = {0.5 * (s.at(x + 1, y) - s.at(x - 1, y)), 0.5 * (s.at(x, y + 1) - s.at(x, y - 1))};
  const double xx = s.at(x + 1, y) - 2 * s.at(x, y) + s.at(x - 1, y);
  const double yy = s.at(x, y + 1) - 2 * s.at(x, y) + s.at(x, y - 1);
  const double xy = 0.25 * (s.at(x + 1, y + 1) - s.at(x + 1, y - 1) - s.at(x - 1, y + 1) +
                            s.at(x - 1, y - 1));
  q.H << xx, xy, xy, yy;
  return q;
}

// Four intensity alternations around a circle separate X-junctions from
// L-corners and edges.
bool passes_circle_test(const Image2D& view, double x, double y, double radius) {
  constexpr int kSamples = 24;
  std::array<double, kSamples> v{};
  double lo = 1e300, hi = -1e300;
  for (int k = 0; k < kSamples; ++k) {
    const double a = 2 * M_PI * k / kSamples;
    v[k] = view.sample(x + radius * std::cos(a), y + radius * std::sin(a));
    lo = std::min(lo, v[k]);
    hi = std::max(hi, v[k]);
  }
  if (hi - lo < 1e-6) return false;
  const double mid = 0.5 * (lo + hi);
  int changes = 0;
  for (int k = 0; k < kSamples; ++k) {
    if ((v[k] > mid) != (v[(k + 1) % kSamples] > mid)) ++changes;
  }
  return changes == 4;
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace

CoarseCorner corner_from_lens_coords(const MicroLensGrid& grid, double row, double col) {
  CoarseCorner c;
  c.anchor.i = std::clamp(static_cast<int>(std::lround(row)), 0, grid.rows - 1);
  c.anchor.j = std::clamp(static_cast<int>(std::lround(col)), 0, grid.cols - 1);
  const double row_step = grid.layout == GridLayout::Hexagonal ? 0.8660254037844386 : 1.0;
  const double du = (col - c.anchor.j) * grid.pitch;
  const double dv = (row - c.anchor.i) * grid.pitch * row_step;
  const double cs = std::cos(grid.rotation), sn = std::sin(grid.rotation);
  c.offset = {cs * du - sn * dv, sn * du + cs * dv};
  c.position = grid.lens_center(c.anchor.i, c.anchor.j) + c.offset;
  return c;
}

std::vector<CoarseCorner> find_saddle_points(const Image2D& view, const MicroLensGrid& grid,
                                             const SaddleOptions& opt) {
  const int w = view.width, h = view.height;
  if (w < 7 || h < 7) return {};
  const Image2D s = gaussian_blur(view, opt.smoothing_sigma);

  Image2D resp(w, h, 0.0);
  double max_resp = 0;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const LocalQuadratic q = quadratic_at(s, x, y);
      resp.at(x, y) = -q.H.determinant();
      max_resp = std::max(max_resp, resp.at(x, y));
    }
  }
  if (!(max_resp > 0)) return {};

  std::vector<CoarseCorner> out;
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) {
      const double v = resp.at(x, y);
      if (v < opt.relative_threshold * max_resp) continue;
      bool is_max = true;
      for (int dy = -2; dy <= 2 && is_max; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const double n = resp.at(x + dx, y + dy);
          // ties go to the first in raster order
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > v || (earlier && n == v)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;

      // Peak of a quadratic fitted to the response around the maximum.
      const LocalQuadratic q = quadratic_at(resp, x, y);
      if (q.H.determinant() <= 0 || q.H.trace() >= 0) continue;
      Eigen::Vector2d delta = -q.H.inverse() * q.g;
      if (!(delta.cwiseAbs().maxCoeff() <= 1.0)) continue;
      const double fx = x + delta.x(), fy = y + delta.y();
      if (!passes_circle_test(view, fx, fy, opt.circle_radius)) continue;

      CoarseCorner c = corner_from_lens_coords(grid, fy, fx);
      c.strength = v;
      out.push_back(c);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CoarseCorner& a, const CoarseCorner& b) { return a.strength > b.strength; });
  if (opt.max_candidates > 0 && static_cast<int>(out.size()) > opt.max_candidates) {
    out.resize(opt.max_candidates);
  }
  return out;
}

BoardTopology order_board(const std::vector<CoarseCorner>& candidates,
                          const CheckerboardSpec& spec) {
  spec.validate();
  const int n_expected = spec.corner_count();
  std::vector<CoarseCorner> pts(candidates.begin(),
                                candidates.begin() + std::min<std::size_t>(candidates.size(),
                                                                           3 * n_expected));
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw Error(ErrorCode::DetectionFailure, "too few corner candidates");

  auto neighbours = [&](int k, int count) {
    std::vector<std::pair<double, int>> d;
    for (int m = 0; m < n; ++m) {
      if (m != k) d.push_back({(pts[m].position - pts[k].position).squaredNorm(), m});
    }
    const int c = std::min<int>(count, static_cast<int>(d.size()));
    std::partial_sort(d.begin(), d.begin() + c, d.end());
    std::vector<int> out;
    for (int q = 0; q < c; ++q) out.push_back(d[q].second);
    return out;
  };

  // Seed: strongest candidate whose four nearest neighbours form two
  // opposite pairs.
  int seed = -1;
  Eigen::Vector2d e1, e2;
  for (int k = 0; k < n && seed < 0; ++k) {
    const auto nb = neighbours(k, 4);
    if (nb.size() < 4) continue;
    std::array<Eigen::Vector2d, 4> v;
    for (int q = 0; q < 4; ++q) v[q] = pts[nb[q]].position - pts[k].position;
    for (int a = 1; a < 4 && seed < 0; ++a) {
      // v[0] paired with v[a]; the remaining two form the other pair
      std::array<int, 2> rest{};
      int r = 0;
      for (int q = 1; q < 4; ++q) if (q != a) rest[r++] = q;
      const double l0 = v[0].norm();
      if ((v[0] + v[a]).norm() > 0.25 * l0) continue;
      if ((v[rest[0]] + v[rest[1]]).norm() > 0.25 * v[rest[0]].norm()) continue;
      const double c = std::abs(v[0].normalized().dot(v[rest[0]].normalized()));
      if (c > 0.8) continue;
      Eigen::Vector2d p = 0.5 * (v[0] - v[a]);
      Eigen::Vector2d q = 0.5 * (v[rest[0]] - v[rest[1]]);
      if (std::abs(q.x()) > std::abs(p.x())) std::swap(p, q);
      if (p.x() < 0) p = -p;
      if (q.y() < 0) q = -q;
      e1 = p;
      e2 = q;
      seed = k;
    }
  }
  if (seed < 0) throw Error(ErrorCode::DetectionFailure, "no interior corner found to seed the board");

  struct Node {
    int idx;
    Eigen::Vector2d e1, e2;
  };
  std::map<std::pair<int, int>, Node> grid_nodes;  // (I, J) -> node
  std::vector<char> used(n, 0);
  std::deque<std::pair<int, int>> queue;
  grid_nodes[{0, 0}] = {seed, e1, e2};
  used[seed] = 1;
  queue.push_back({0, 0});
  while (!queue.empty()) {
    const auto key = queue.front();
    queue.pop_front();
    const Node node = grid_nodes.at(key);
    const PixelPoint p = pts[node.idx].position;
    const std::array<std::tuple<int, int, Eigen::Vector2d>, 4> moves{
        std::tuple{0, 1, node.e1}, std::tuple{0, -1, Eigen::Vector2d(-node.e1)},
        std::tuple{1, 0, node.e2}, std::tuple{-1, 0, Eigen::Vector2d(-node.e2)}};
    for (const auto& [dI, dJ, step] : moves) {
      const std::pair<int, int> nk{key.first + dI, key.second + dJ};
      if (grid_nodes.count(nk)) continue;
      const PixelPoint pred = p + step;
      const double tol = 0.3 * std::min(node.e1.norm(), node.e2.norm());
      int best = -1;
      double best_d = tol;
      for (int m = 0; m < n; ++m) {
        if (used[m]) continue;
        const double d = (pts[m].position - pred).norm();
        if (d < best_d) {
          best_d = d;
          best = m;
        }
      }
      if (best < 0) continue;
      Node next{best, node.e1, node.e2};
      const Eigen::Vector2d actual = pts[best].position - p;
      if (dJ != 0) next.e1 = dJ * actual;
      else next.e2 = dI * actual;
      used[best] = 1;
      grid_nodes[nk] = next;
      queue.push_back(nk);
    }
  }

  int imin = 0, imax = 0, jmin = 0, jmax = 0;
  for (const auto& [k, node] : grid_nodes) {
    imin = std::min(imin, k.first);
    imax = std::max(imax, k.first);
    jmin = std::min(jmin, k.second);
    jmax = std::max(jmax, k.second);
  }
  const int nI = imax - imin + 1, nJ = jmax - jmin + 1;
  bool transpose;
  if (nJ == spec.cols && nI == spec.rows) {
    transpose = false;
  } else if (nJ == spec.rows && nI == spec.cols) {
    transpose = true;
  } else {
    throw Error(ErrorCode::DetectionFailure,
                "corner lattice spans " + std::to_string(nI) + "x" + std::to_string(nJ) +
                    ", expected " + std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
  }

  BoardTopology topo;
  topo.rows = spec.rows;
  topo.cols = spec.cols;
  topo.corners.assign(n_expected, std::nullopt);
  std::vector<std::pair<std::pair<int, int>, int>> labelled;
  for (const auto& [k, node] : grid_nodes) {
    int i = k.first - imin, j = k.second - jmin;
    if (transpose) std::swap(i, j);
    labelled.push_back({{i, j}, node.idx});
  }

  // Mean image steps along board +j and +i fix handedness and the 180 degree
  // ambiguity.
  auto mean_step = [&](bool along_j) {
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    std::map<std::pair<int, int>, int> lookup(labelled.begin(), labelled.end());
    for (const auto& [ij, idx] : labelled) {
      const auto nk = along_j ? std::pair{ij.first, ij.second + 1} : std::pair{ij.first + 1, ij.second};
      auto it = lookup.find(nk);
      if (it != lookup.end()) acc += pts[it->second].position - pts[idx].position;
    }
    return acc;
  };
  Eigen::Vector2d ex = mean_step(true), ey = mean_step(false);
  const bool mirror = cross2(ex, ey) < 0;
  if (mirror) {
    for (auto& [ij, idx] : labelled) ij.second = spec.cols - 1 - ij.second;
    ex = -ex;
  }
  if ((ex + ey).sum() > 0) {
    for (auto& [ij, idx] : labelled) {
      ij.first = spec.rows - 1 - ij.first;
      ij.second = spec.cols - 1 - ij.second;
    }
  }
  for (const auto& [ij, idx] : labelled) topo.corners[ij.first * spec.cols + ij.second] = pts[idx];
  return topo;
}

BoardTopology detect_center_view_corners(const RawImage& raw, const MicroLensGrid& grid,
                                         const CheckerboardSpec& spec, const SaddleOptions& opt) {
  return order_board(find_saddle_points(center_view_image(raw, grid), grid, opt), spec);
}

}  // namespace lfcal
