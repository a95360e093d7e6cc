#include "lfcal/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "lfcal/error.hpp"

namespace lfcal {

namespace {

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d T;
  T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return T;
}

Eigen::Vector2d apply_h(const Eigen::Matrix3d& H, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = H * p.homogeneous();
  return q.hnormalized();
}

void check_view(const ViewCorners& v, size_t k) {
  if (v.board.size() != v.pixels.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "view " + std::to_string(k) + ": board and pixel counts differ");
  }
  if (v.board.size() < 4) {
    throw Error(ErrorCode::UnderConstrained,
                "view " + std::to_string(k) + " has " + std::to_string(v.board.size()) +
                    " corners, need 4");
  }
}

// Row of the conic system for columns i, j of H, with the skew entry of
// B = K^-T K^-1 dropped: b = (B11, B22, B13, B23, B33).
Eigen::Matrix<double, 1, 5> conic_row(const Eigen::Matrix3d& H, int i, int j) {
  const Eigen::Vector3d hi = H.col(i);
  const Eigen::Vector3d hj = H.col(j);
  Eigen::Matrix<double, 1, 5> v;
  v << hi(0) * hj(0), hi(1) * hj(1), hi(2) * hj(0) + hi(0) * hj(2),
      hi(2) * hj(1) + hi(1) * hj(2), hi(2) * hj(2);
  return v;
}

constexpr int kIntrinsicParams = 8;  // fx fy cx cy k1 k2 p1 p2

struct Model {
  SarbIntrinsics intr;
  DistortionCoeffs dist;
  std::vector<Pose> poses;
};

Eigen::VectorXd residuals(const Model& m, const std::vector<ViewCorners>& views) {
  size_t n = 0;
  for (const auto& v : views) n += v.board.size();
  Eigen::VectorXd r(2 * n);
  size_t row = 0;
  for (size_t k = 0; k < views.size(); ++k) {
    const Pose& pose = m.poses[k];
    for (size_t c = 0; c < views[k].board.size(); ++c) {
      const Eigen::Vector2d& b = views[k].board[c];
      const Eigen::Vector3d P = pose.R * Eigen::Vector3d(b.x(), b.y(), 0.0) + pose.T;
      const PixelPoint p = project_distorted(P, m.intr, m.dist);
      r.segment<2>(2 * row) = p - views[k].pixels[c];
      ++row;
    }
  }
  return r;
}

// Analytic Jacobian. Pose increments are (omega, dT) with R <- exp(omega) R.
Eigen::MatrixXd jacobian(const Model& m, const std::vector<ViewCorners>& views,
                         bool with_distortion) {
  size_t n = 0;
  for (const auto& v : views) n += v.board.size();
  const int cols = kIntrinsicParams + 6 * static_cast<int>(views.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, cols);
  const DistortionCoeffs& d = m.dist;
  size_t row = 0;
  for (size_t k = 0; k < views.size(); ++k) {
    const Pose& pose = m.poses[k];
    const int pc = kIntrinsicParams + 6 * static_cast<int>(k);
    for (size_t c = 0; c < views[k].board.size(); ++c) {
      const Eigen::Vector2d& b = views[k].board[c];
      const Eigen::Vector3d RX = pose.R * Eigen::Vector3d(b.x(), b.y(), 0.0);
      const Eigen::Vector3d P = RX + pose.T;
      const double iz = 1.0 / P.z();
      const double x = P.x() * iz;
      const double y = P.y() * iz;
      const double r2 = x * x + y * y;
      const double rad = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
      const double drad = d.k1 + 2.0 * d.k2 * r2;
      const double xd = x * rad + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
      const double yd = y * rad + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;

      Eigen::Matrix2d Dd;  // d(xd, yd) / d(x, y)
      Dd(0, 0) = rad + 2.0 * x * x * drad + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
      Dd(0, 1) = 2.0 * x * y * drad + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
      Dd(1, 0) = 2.0 * x * y * drad + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
      Dd(1, 1) = rad + 2.0 * y * y * drad + 6.0 * d.p1 * y + 2.0 * d.p2 * x;

      Eigen::Matrix<double, 2, 3> Dn;  // d(x, y) / dP
      Dn << iz, 0, -x * iz, 0, iz, -y * iz;

      Eigen::Matrix<double, 2, 3> Dp = Eigen::Vector2d(m.intr.f_x, m.intr.f_y).asDiagonal() * Dd * Dn;

      Eigen::Matrix3d skew;
      skew << 0, -RX.z(), RX.y(), RX.z(), 0, -RX.x(), -RX.y(), RX.x(), 0;

      const Eigen::Index r0 = static_cast<Eigen::Index>(2 * row);
      J(r0, 0) = xd;
      J(r0 + 1, 1) = yd;
      J(r0, 2) = 1.0;
      J(r0 + 1, 3) = 1.0;
      if (with_distortion) {
        J(r0, 4) = m.intr.f_x * x * r2;
        J(r0 + 1, 4) = m.intr.f_y * y * r2;
        J(r0, 5) = m.intr.f_x * x * r2 * r2;
        J(r0 + 1, 5) = m.intr.f_y * y * r2 * r2;
        J(r0, 6) = m.intr.f_x * 2.0 * x * y;
        J(r0 + 1, 6) = m.intr.f_y * (r2 + 2.0 * y * y);
        J(r0, 7) = m.intr.f_x * (r2 + 2.0 * x * x);
        J(r0 + 1, 7) = m.intr.f_y * 2.0 * x * y;
      }
      J.block<2, 3>(r0, pc) = -Dp * skew;
      J.block<2, 3>(r0, pc + 3) = Dp;
      ++row;
    }
  }
  return J;
}

Model apply_step(const Model& m, const Eigen::VectorXd& delta) {
  Model out = m;
  out.intr.f_x += delta(0);
  out.intr.f_y += delta(1);
  out.intr.c_x += delta(2);
  out.intr.c_y += delta(3);
  out.dist.k1 += delta(4);
  out.dist.k2 += delta(5);
  out.dist.p1 += delta(6);
  out.dist.p2 += delta(7);
  for (size_t k = 0; k < out.poses.size(); ++k) {
    const int pc = kIntrinsicParams + 6 * static_cast<int>(k);
    out.poses[k].R = rotation_from_axis_angle(delta.segment<3>(pc)) * out.poses[k].R;
    out.poses[k].T += delta.segment<3>(pc + 3);
  }
  return out;
}

}  // namespace

ViewCorners view_from_detection(const DetectedBoard& det, const CheckerboardSpec& spec) {
  ViewCorners v;
  for (const auto& c : det.corners) {
    if (!c.valid) continue;
    v.board.push_back(spec.corner(c.i, c.j));
    v.pixels.emplace_back(c.point.x_c_sub, c.point.y_c_sub);
    v.lambdas.push_back(c.point.lambda);
  }
  return v;
}

Eigen::Matrix3d estimate_homography(const std::vector<Eigen::Vector2d>& board,
                                    const std::vector<PixelPoint>& pixels) {
  if (board.size() != pixels.size()) {
    throw Error(ErrorCode::InvalidArgument, "homography: point counts differ");
  }
  if (board.size() < 4) {
    throw Error(ErrorCode::UnderConstrained, "homography needs at least 4 points");
  }
  const Eigen::Matrix3d Tb = normalizing_transform(board);
  const Eigen::Matrix3d Ti = normalizing_transform(pixels);
  const Eigen::Index n = static_cast<Eigen::Index>(board.size());
  Eigen::MatrixXd A(2 * n, 9);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Vector3d X = Tb * board[k].homogeneous();
    const Eigen::Vector2d u = apply_h(Ti, pixels[k]);
    A.row(2 * k) << X.transpose(), 0, 0, 0, -u.x() * X.transpose();
    A.row(2 * k + 1) << 0, 0, 0, X.transpose(), -u.y() * X.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  // A generic configuration leaves a one-dimensional null space; collinear
  // points leave more.
  if (s.size() < 8 || s(7) <= 1e-10 * s(0)) {
    throw Error(ErrorCode::DegenerateSolution, "homography points are (nearly) collinear");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d H = Ti.inverse() * Hn * Tb;
  return H / H.norm();
}

ClosedFormResult step1_closed_form(const std::vector<ViewCorners>& views,
                                   double warn_condition) {
  if (views.size() < 3) {
    throw Error(ErrorCode::UnderConstrained,
                "closed-form intrinsics need 3 views, got " + std::to_string(views.size()));
  }
  for (size_t k = 0; k < views.size(); ++k) check_view(views[k], k);

  // Work in pixel coordinates scaled to order one; the map is an isotropic
  // scaling plus shift, so zero skew carries over.
  std::vector<Eigen::Vector2d> all;
  for (const auto& v : views) all.insert(all.end(), v.pixels.begin(), v.pixels.end());
  const Eigen::Matrix3d N = normalizing_transform(all);

  std::vector<Eigen::Matrix3d> Hs;
  Eigen::MatrixXd V(2 * views.size(), 5);
  for (size_t k = 0; k < views.size(); ++k) {
    Eigen::Matrix3d H = N * estimate_homography(views[k].board, views[k].pixels);
    H /= H.norm();
    Hs.push_back(H);
    V.row(2 * k) = conic_row(H, 0, 1);
    V.row(2 * k + 1) = conic_row(H, 0, 0) - conic_row(H, 1, 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  ClosedFormResult out;
  out.condition = sv(0) > 0 ? sv(3) / sv(0) : 0.0;
  out.ill_conditioned = out.condition < warn_condition;

  Eigen::VectorXd b = svd.matrixV().col(4);
  if (b(0) < 0) b = -b;
  const double B11 = b(0), B22 = b(1), B13 = b(2), B23 = b(3), B33 = b(4);
  if (B11 <= 0 || B22 <= 0) {
    throw Error(ErrorCode::DegenerateSolution, "image of the absolute conic is not definite");
  }
  const double lam = B33 - B13 * B13 / B11 - B23 * B23 / B22;
  if (lam <= 0) {
    throw Error(ErrorCode::DegenerateSolution, "image of the absolute conic is not definite");
  }
  Eigen::Matrix3d Kn = Eigen::Matrix3d::Identity();
  Kn(0, 0) = std::sqrt(lam / B11);
  Kn(1, 1) = std::sqrt(lam / B22);
  Kn(0, 2) = -B13 / B11;
  Kn(1, 2) = -B23 / B22;
  const Eigen::Matrix3d K = N.inverse() * Kn;
  const Eigen::Matrix3d Kinv = K.inverse();

  // The decomposition yields a positive focal length; the model's center view
  // is inverted, which is the same camera turned by pi about its axis.
  const Eigen::Matrix3d flip = Eigen::Vector3d(-1, -1, 1).asDiagonal();
  out.intrinsics.f_x = -K(0, 0);
  out.intrinsics.f_y = -K(1, 1);
  out.intrinsics.c_x = K(0, 2);
  out.intrinsics.c_y = K(1, 2);

  for (size_t k = 0; k < views.size(); ++k) {
    const Eigen::Matrix3d M = Kinv * N.inverse() * Hs[k];
    const double scale = 2.0 / (M.col(0).norm() + M.col(1).norm());
    Eigen::Vector3d r1 = scale * M.col(0);
    Eigen::Vector3d r2 = scale * M.col(1);
    Eigen::Vector3d t = scale * M.col(2);
    if (t.z() < 0) {
      r1 = -r1;
      r2 = -r2;
      t = -t;
    }
    Eigen::Matrix3d R;
    R << r1, r2, r1.cross(r2);
    Pose pose;
    pose.R = flip * nearest_rotation(R);
    pose.T = flip * t;
    out.poses.push_back(pose);
  }
  return out;
}

double reprojection_rms(const SarbIntrinsics& intr, const DistortionCoeffs& dist,
                        const std::vector<Pose>& poses, const std::vector<ViewCorners>& views) {
  const Eigen::VectorXd r = residuals(Model{intr, dist, poses}, views);
  if (r.size() == 0) return 0.0;
  return std::sqrt(r.squaredNorm() / (r.size() / 2));
}

Step1Refined step1_refine(const ClosedFormResult& init, const std::vector<ViewCorners>& views,
                          const RefineOptions& opt) {
  if (init.poses.size() != views.size()) {
    throw Error(ErrorCode::InvalidArgument, "refinement: pose and view counts differ");
  }
  for (size_t k = 0; k < views.size(); ++k) check_view(views[k], k);

  Model m{init.intrinsics, DistortionCoeffs{}, init.poses};
  Eigen::VectorXd r = residuals(m, views);
  const double points = static_cast<double>(r.size() / 2);
  double cost = r.squaredNorm();

  Step1Refined out;
  out.initial_rms = std::sqrt(cost / points);
  double mu = opt.initial_damping;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd J = jacobian(m, views, opt.estimate_distortion);
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd diag = A.diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      if (diag(i) <= 0) diag(i) = 1.0;  // frozen distortion columns
    }
    bool accepted = false;
    while (mu <= opt.max_damping) {
      Eigen::MatrixXd Ad = A;
      Ad.diagonal() += mu * diag;
      const Eigen::VectorXd delta = Ad.ldlt().solve(-g);
      const Model trial = apply_step(m, delta);
      const Eigen::VectorXd rt = residuals(trial, views);
      const double trial_cost = rt.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double rel = (cost - trial_cost) / cost;
        m = trial;
        r = rt;
        cost = trial_cost;
        mu = std::max(mu * 0.1, 1e-15);
        accepted = true;
        if (rel < opt.relative_tolerance) out.converged = true;
        break;
      }
      mu *= 10.0;
    }
    out.iterations = it + 1;
    if (!accepted) {
      // No decrease at any damping: either the round-off floor of an exact
      // fit or a genuine failure.
      if (std::sqrt(cost / points) < 1e-9) {
        out.converged = true;
      } else {
        out.diverged = true;
      }
      break;
    }
    if (out.converged) break;
  }
  out.intrinsics = m.intr;
  out.intrinsics.K1 = init.intrinsics.K1;
  out.intrinsics.K2 = init.intrinsics.K2;
  out.distortion = m.dist;
  out.poses = m.poses;
  out.final_rms = std::sqrt(cost / points);
  return out;
}

Step2Result step2_solve(const std::vector<std::pair<double, double>>& samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::UnderConstrained, "disparity law needs 2 samples");
  }
  double inv_min = INFINITY, inv_max = -INFINITY;
  double s_inv = 0, s_lam = 0;
  for (const auto& [Z, lambda] : samples) {
    if (!(Z > 0) || !std::isfinite(lambda)) {
      throw Error(ErrorCode::InvalidArgument, "disparity sample with Z <= 0 or non-finite lambda");
    }
    inv_min = std::min(inv_min, 1.0 / Z);
    inv_max = std::max(inv_max, 1.0 / Z);
    s_inv += 1.0 / (Z * Z);
    s_lam += lambda * lambda;
  }
  if (inv_max - inv_min <= 1e-12 * inv_max) {
    throw Error(ErrorCode::RankDeficient, "all disparity samples share one depth");
  }
  const double n = static_cast<double>(samples.size());
  // Column scaling to unit RMS, then rows to unit norm.
  const Eigen::Vector3d D(1.0 / std::sqrt(s_inv / n), 1.0,
                          s_lam > 0 ? 1.0 / std::sqrt(s_lam / n) : 1.0);
  Eigen::MatrixXd C(samples.size(), 3);
  std::vector<double> row_norm(samples.size());
  for (size_t k = 0; k < samples.size(); ++k) {
    const Eigen::Vector3d a(1.0 / samples[k].first, 1.0, samples[k].second);
    const Eigen::Vector3d b = a.cwiseProduct(D);
    row_norm[k] = b.norm();
    C.row(k) = b.transpose() / row_norm[k];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
  const Eigen::Vector3d v = svd.matrixV().col(2);
  if (std::abs(v(2)) < 1e-12) {
    throw Error(ErrorCode::DegenerateSolution, "disparity null vector has no lambda component");
  }
  const Eigen::Vector3d w = v.cwiseProduct(D) / (v(2) * D(2));

  Step2Result out;
  out.samples = static_cast<int>(samples.size());
  out.K2 = w(0);
  out.K1 = w(1);
  out.residual = samples.size() >= 3 ? svd.singularValues()(2) : 0.0;

  double ss = 0;
  for (const auto& [Z, lambda] : samples) {
    const double e = out.K2 / Z + out.K1 + lambda;
    ss += e * e;
  }
  out.rms_law = std::sqrt(ss / n);
  const double max_row = *std::max_element(row_norm.begin(), row_norm.end());
  out.law_bound = max_row * out.residual / (std::abs(v(2)) * D(2) * std::sqrt(n));

  // Ordinary least squares of lambda against 1/Z, for diagnostics only.
  Eigen::MatrixXd A(samples.size(), 2);
  Eigen::VectorXd y(samples.size());
  for (size_t k = 0; k < samples.size(); ++k) {
    A(k, 0) = 1.0 / samples[k].first;
    A(k, 1) = 1.0;
    y(k) = samples[k].second;
  }
  const Eigen::Vector2d ls = A.colPivHouseholderQr().solve(y);
  out.ls_K2 = -ls(0);
  out.ls_K1 = -ls(1);
  return out;
}

CalibrationResult calibrate_views(const std::vector<ViewCorners>& views,
                                  const RefineOptions& opt) {
  const ClosedFormResult cf = step1_closed_form(views);
  const Step1Refined s1 = step1_refine(cf, views, opt);

  CalibrationResult res;
  res.intrinsics = s1.intrinsics;
  res.distortion = s1.distortion;
  res.poses = s1.poses;
  res.closed_form_rms = s1.initial_rms;
  res.rms_reprojection = s1.final_rms;
  res.ill_conditioned = cf.ill_conditioned;
  res.refine_diverged = s1.diverged;
  res.refine_iterations = s1.iterations;

  std::vector<std::pair<double, double>> samples;
  for (size_t k = 0; k < views.size(); ++k) {
    const ViewCorners& v = views[k];
    if (v.lambdas.size() != v.board.size()) {
      throw Error(ErrorCode::InvalidArgument,
                  "view " + std::to_string(k) + " lacks disparities for every corner");
    }
    ViewResidual vr;
    double ss = 0;
    for (size_t c = 0; c < v.board.size(); ++c) {
      const ScenePoint P = corner_depth(res.poses[k], v.board[c]);
      const double e = (project_distorted(P, res.intrinsics, res.distortion) - v.pixels[c]).norm();
      ss += e * e;
      vr.max = std::max(vr.max, e);
      samples.emplace_back(P.z(), v.lambdas[c]);
    }
    vr.corners = static_cast<int>(v.board.size());
    vr.rms = std::sqrt(ss / vr.corners);
    res.residuals.push_back(vr);
  }

  res.step2 = step2_solve(samples);
  res.intrinsics.K1 = res.step2.K1;
  res.intrinsics.K2 = res.step2.K2;
  res.k1k2_residual = res.step2.residual;
  return res;
}

CalibrationResult calibrate_full(const std::vector<DetectedBoard>& boards,
                                 const CheckerboardSpec& spec, const RefineOptions& opt) {
  std::vector<ViewCorners> views;
  views.reserve(boards.size());
  for (const auto& b : boards) views.push_back(view_from_detection(b, spec));
  return calibrate_views(views, opt);
}

}  // namespace lfcal
