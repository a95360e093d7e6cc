#include "lfcal/core_model.hpp"

#include <cmath>
#include <string>

#include "lfcal/error.hpp"

namespace lfcal {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::IndexOutOfRange: return "index out of range";
    case ErrorCode::DegeneratePoint: return "degenerate point";
    case ErrorCode::FocalSingularity: return "focal-surface singularity";
    case ErrorCode::PointAtInfinity: return "point at infinity";
    case ErrorCode::DegenerateLine: return "degenerate line";
    case ErrorCode::InconsistentLines: return "inconsistent lines";
    case ErrorCode::EstimationFailure: return "estimation failure";
    case ErrorCode::UnderConstrained: return "under-constrained";
    case ErrorCode::RankDeficient: return "rank deficient";
    case ErrorCode::DegenerateSolution: return "degenerate solution";
    case ErrorCode::BehindCamera: return "behind camera";
    case ErrorCode::NoIntersection: return "no intersection";
    case ErrorCode::DetectionFailure: return "detection failure";
    case ErrorCode::Io: return "i/o error";
  }
  return "unknown";
}

namespace {

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void PhysicalCameraParams::validate() const {
  if (!positive(F) || !positive(L) || !positive(l) || !positive(d_pix)) {
    throw Error(ErrorCode::InvalidArgument,
                "camera parameters F, L, l, d_pix must be positive");
  }
  if (!std::isfinite(c_x) || !std::isfinite(c_y)) {
    throw Error(ErrorCode::InvalidArgument, "principal point must be finite");
  }
}

Ray4 ProjectionMatrix::apply(const PixelIndex4& p) const {
  const double in[5] = {p.x_sp, p.y_sp, p.x_cp, p.y_cp, 1.0};
  double out[5];
  for (int r = 0; r < 5; ++r) {
    double acc = 0.0;
    for (int c = 0; c < 5; ++c) acc += m_[r * 5 + c] * in[c];
    out[r] = acc;
  }
  return {out[0] / out[4], out[1] / out[4], out[2] / out[4], out[3] / out[4]};
}

PixelPhysical4 pixel_index_to_physical(const PixelIndex4& p, const PhysicalCameraParams& cam) {
  return {cam.d_pix * p.x_sp, cam.d_pix * p.y_sp, cam.d_pix * (p.x_cp - cam.c_x),
          cam.d_pix * (p.y_cp - cam.c_y)};
}

Ray4 refract_main_lens(const Ray4& ray_in, double F) {
  return {ray_in.s, ray_in.t, ray_in.u - ray_in.s / F, ray_in.v - ray_in.t / F};
}

Ray4 pixel_to_inner_ray(const PixelPhysical4& p, const PhysicalCameraParams& cam) {
  const double ratio = cam.L / cam.l;
  const double total = cam.L + cam.l;
  Ray4 r;
  r.s = -p.x_s * ratio;
  r.t = -p.y_s * ratio;
  r.u = -p.x_s / cam.l - p.x_c / total;
  r.v = -p.y_s / cam.l - p.y_c / total;
  return r;
}

ProjectionMatrix projection_matrix(const PhysicalCameraParams& cam) {
  cam.validate();
  const double a = -cam.L / cam.l * cam.d_pix;
  const double b = (cam.L / cam.F - 1.0) / cam.l * cam.d_pix;
  const double c = -cam.d_pix / (cam.L + cam.l);
  ProjectionMatrix m;
  m(0, 0) = a;
  m(1, 1) = a;
  m(2, 0) = b;
  m(2, 2) = c;
  m(2, 4) = -c * cam.c_x;
  m(3, 1) = b;
  m(3, 3) = c;
  m(3, 4) = -c * cam.c_y;
  m(4, 4) = 1.0;
  return m;
}

SarbIntrinsics sarb_from_physical(const PhysicalCameraParams& cam) {
  cam.validate();
  SarbIntrinsics intr;
  intr.f_x = -(cam.L + cam.l) / cam.d_pix;
  intr.f_y = intr.f_x;
  intr.c_x = cam.c_x;
  intr.c_y = cam.c_y;
  intr.K1 = -(cam.L - cam.F) * (cam.L + cam.l) / (cam.F * cam.l);
  intr.K2 = cam.L / cam.l * (cam.L + cam.l);
  return intr;
}

PixelPoint center_view_project(const ScenePoint& P, const SarbIntrinsics& intr) {
  if (P.z() == 0.0) {
    throw Error(ErrorCode::DegeneratePoint, "center-view projection of a point at Z = 0");
  }
  return {intr.f_x * P.x() / P.z() + intr.c_x, intr.f_y * P.y() / P.z() + intr.c_y};
}

PixelPoint scene_to_pixel(const ScenePoint& P, const PixelPoint& sub_center,
                          const SarbIntrinsics& intr) {
  const double denom = intr.K1 * P.z() + intr.K2;
  if (denom == 0.0) {
    throw Error(ErrorCode::FocalSingularity,
                "scene point images exactly on the micro-lens array");
  }
  return {(intr.f_x * P.x() - P.z() * (sub_center.x() - intr.c_x)) / denom,
          (intr.f_y * P.y() - P.z() * (sub_center.y() - intr.c_y)) / denom};
}

double disparity_from_depth(double Z, const SarbIntrinsics& intr) {
  if (Z == 0.0) throw Error(ErrorCode::DegeneratePoint, "disparity at Z = 0");
  return -intr.K2 / Z - intr.K1;
}

double depth_from_disparity(double lambda, const SarbIntrinsics& intr) {
  const double denom = lambda + intr.K1;
  if (denom == 0.0) {
    throw Error(ErrorCode::PointAtInfinity, "disparity " + std::to_string(lambda) +
                                                " corresponds to a point at infinity");
  }
  return -intr.K2 / denom;
}

PixelPoint lf_point_slice(const LFPoint& lp, const PixelPoint& sub_aperture_offset) {
  return {lp.x_c_sub + lp.lambda * sub_aperture_offset.x(),
          lp.y_c_sub + lp.lambda * sub_aperture_offset.y()};
}

}  // namespace lfcal
