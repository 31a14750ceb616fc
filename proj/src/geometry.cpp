#include "roadmesh/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "roadmesh/error.hpp"

namespace roadmesh {

SE3Pose SE3Pose::from_matrix(const Mat4& m) {
  SE3Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

SE3Pose SE3Pose::from_row_major(const std::array<double, 16>& v) {
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<size_t>(r * 4 + c)];
  }
  return from_matrix(m);
}

Mat4 SE3Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

std::array<double, 16> SE3Pose::row_major() const {
  const Mat4 m = matrix();
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out[static_cast<size_t>(r * 4 + c)] = m(r, c);
  }
  return out;
}

SE3Pose SE3Pose::inverse() const {
  SE3Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

SE3Pose SE3Pose::operator*(const SE3Pose& rhs) const {
  SE3Pose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

double SE3Pose::orthonormality_error() const {
  return (rotation.transpose() * rotation - Mat3::Identity()).norm();
}

Vec3 AxisAngle::axis() const {
  const double a = angle();
  if (a == 0.0) return Vec3::UnitX();
  return phi / a;
}

void CameraIntrinsics::validate() const {
  std::ostringstream why;
  if (!(fx > 0.0) || !(fy > 0.0)) why << "focal lengths must be positive";
  else if (width <= 0 || height <= 0) why << "image size must be positive";
  else if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    why << "principal point outside the image";
  if (!why.str().empty()) throw UsageError("invalid intrinsics: " + why.str());
}

SE3Pose ExtrinsicCorrection::as_pose() const {
  SE3Pose p;
  p.rotation = rodrigues(phi);
  p.translation = delta_t;
  return p;
}

void ExtrinsicCorrection::clamp() {
  const double max_angle = rot_clamp_deg * std::numbers::pi / 180.0;
  const double a = phi.norm();
  if (a > max_angle) phi *= max_angle / a;
  for (int i = 0; i < 3; ++i) delta_t[i] = std::clamp(delta_t[i], -trans_clamp, trans_clamp);
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

namespace {

// sin(a)/a, (1 - cos a)/a^2, (a - sin a)/a^3
struct RodriguesCoeffs {
  double a;
  double b;
  double c;
};

RodriguesCoeffs coefficients(double alpha) {
  const double a2 = alpha * alpha;
  if (alpha < kSmallAngle) {
    return {1.0 - a2 / 6.0, 0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0};
  }
  const double s = std::sin(alpha);
  const double c = std::cos(alpha);
  return {s / alpha, (1.0 - c) / a2, (alpha - s) / (a2 * alpha)};
}

}  // namespace

Mat3 rodrigues(const Vec3& phi) {
  const RodriguesCoeffs k = coefficients(phi.norm());
  const Mat3 W = skew(phi);
  return Mat3::Identity() + k.a * W + k.b * (W * W);
}

Vec3 rodrigues_point_gradient(const Vec3& phi, const Vec3& p, const Vec3& upstream) {
  // d(R p)/d phi = -[R p]x J_l(phi), J_l = I + b [phi]x + c [phi]x^2.
  const RodriguesCoeffs k = coefficients(phi.norm());
  const Mat3 W = skew(phi);
  const Mat3 R = Mat3::Identity() + k.a * W + k.b * (W * W);
  const Mat3 Jl = Mat3::Identity() + k.b * W + k.c * (W * W);
  return Jl.transpose() * (R * p).cross(upstream);
}

SE3Pose compose_camera_pose(const SE3Pose& ego, const SE3Pose& calibrated_extrinsic,
                            const ExtrinsicCorrection& correction) {
  if (correction.phi.isZero(0.0) && correction.delta_t.isZero(0.0)) {
    return ego * calibrated_extrinsic;
  }
  return ego * (calibrated_extrinsic * correction.as_pose());
}

Projection project(const Vec3& p_world, const SE3Pose& cam, const CameraIntrinsics& K) {
  const Vec3 pc = cam.rotation.transpose() * (p_world - cam.translation);
  Projection out;
  out.depth = pc.z();
  if (!(pc.z() > kNearPlane)) return out;
  out.u = K.fx * pc.x() / pc.z() + K.cx;
  out.v = K.fy * pc.y() / pc.z() + K.cy;
  out.valid = true;
  return out;
}

Vec3 unproject(double u, double v, double depth, const SE3Pose& cam, const CameraIntrinsics& K) {
  const Vec3 pc((u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth);
  return cam.apply(pc);
}

double rotation_angle(const Mat3& R) {
  const double c = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near identity; use the skew part there.
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

}  // namespace roadmesh
