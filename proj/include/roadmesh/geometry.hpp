#pragma once

// Rigid-body math for camera poses: axis-angle rotations, pose composition,
// pinhole projection and the derivatives used by extrinsic refinement.
//
// Conventions:
//   * Poses are camera/body-to-world transforms, p_world = R * p_local + t.
//   * Camera frame is x-right, y-down, z-forward.
//   * Pixel (row i, col j) has its center at (u, v) = (j + 0.5, i + 0.5).

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace roadmesh {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kNearPlane = 0.1;
inline constexpr double kSmallAngle = 1e-6;

struct SE3Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SE3Pose identity() { return {}; }
  static SE3Pose from_matrix(const Mat4& m);
  // Row-major 16 values, as stored in dataset manifests.
  static SE3Pose from_row_major(const std::array<double, 16>& v);

  Mat4 matrix() const;
  std::array<double, 16> row_major() const;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  SE3Pose inverse() const;
  SE3Pose operator*(const SE3Pose& rhs) const;

  // Frobenius norm of R^T R - I.
  double orthonormality_error() const;
};

// Axis-angle vector phi = alpha * omega.
struct AxisAngle {
  Vec3 phi = Vec3::Zero();

  double angle() const { return phi.norm(); }
  // Unit axis; x-axis by convention for the zero rotation.
  Vec3 axis() const;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws UsageError when fx/fy are non-positive or the principal point is
  // outside the image.
  void validate() const;
};

// Per physical camera correction applied on the right of the calibrated
// extrinsic: camera_to_ego = calibrated * [R(phi) | delta_t].
struct ExtrinsicCorrection {
  Vec3 phi = Vec3::Zero();
  Vec3 delta_t = Vec3::Zero();
  double rot_clamp_deg = 0.1;
  double trans_clamp = 0.1;

  SE3Pose as_pose() const;
  // Hard projection onto the clamp box: |phi| <= rot_clamp, |delta_t_i| <=
  // trans_clamp.
  void clamp();
};

Mat3 skew(const Vec3& v);

// R = I + sin(a)/a [phi]x + (1 - cos a)/a^2 [phi]x^2, Taylor expanded below
// kSmallAngle.
Mat3 rodrigues(const Vec3& phi);

// Gradient of upstream . (R(phi) p) with respect to phi.
Vec3 rodrigues_point_gradient(const Vec3& phi, const Vec3& p, const Vec3& upstream);

// ego * calibrated_extrinsic * correction.
SE3Pose compose_camera_pose(const SE3Pose& ego, const SE3Pose& calibrated_extrinsic,
                            const ExtrinsicCorrection& correction);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool valid = false;
};

// cam is camera-to-world. Points with depth <= kNearPlane are flagged invalid.
Projection project(const Vec3& p_world, const SE3Pose& cam, const CameraIntrinsics& K);

// Inverse of project for a given pixel coordinate and depth (z in camera frame).
Vec3 unproject(double u, double v, double depth, const SE3Pose& cam, const CameraIntrinsics& K);

// Geodesic angle of a rotation matrix, radians.
double rotation_angle(const Mat3& R);

}  // namespace roadmesh
