#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "roadmesh/error.hpp"
#include "roadmesh/geometry.hpp"

using namespace roadmesh;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST(Rodrigues, MatchesSeriesExponential) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 phi = random_vec(rng, 2.0);
    const Mat3 R = rodrigues(phi);
    EXPECT_LT((R - oracle::expm_series(oracle::hat(phi))).norm(), 1e-9);
    EXPECT_LT((R.transpose() * R - Mat3::Identity()).norm(), 1e-9);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-9);
  }
}

TEST(Rodrigues, SmallAnglesStayAccurate) {
  for (double a : {0.0, 1e-12, 1e-9, 1e-7, 1e-6, 2e-6, 1e-4}) {
    const Vec3 phi = a * Vec3(0.48, -0.6, 0.64);
    EXPECT_LT((rodrigues(phi) - oracle::expm_series(oracle::hat(phi))).norm(), 1e-14) << a;
  }
}

TEST(Rodrigues, QuarterTurnAboutZ) {
  const Mat3 R = rodrigues(Vec3(0, 0, M_PI / 2));
  EXPECT_NEAR(R(0, 1), -1.0, 1e-15);
  EXPECT_NEAR(R(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(rotation_angle(R), M_PI / 2, 1e-12);
}

TEST(Rodrigues, PointGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi = random_vec(rng, 1.5);
    const Vec3 p = random_vec(rng, 3.0);
    const Vec3 up = random_vec(rng, 1.0);
    const Vec3 g = rodrigues_point_gradient(phi, p, up);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3 a = phi, b = phi;
      a[k] += h;
      b[k] -= h;
      const double fd = (up.dot(rodrigues(a) * p) - up.dot(rodrigues(b) * p)) / (2 * h);
      EXPECT_NEAR(g[k], fd, 1e-7 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Rodrigues, PointGradientAtZero) {
  // d/dphi of u . (p + phi x p) = p x u.
  const Vec3 p(1, 2, 3), u(-0.5, 0.25, 2);
  EXPECT_LT((rodrigues_point_gradient(Vec3::Zero(), p, u) - p.cross(u)).norm(), 1e-12);
}

TEST(Pose, InverseAndComposition) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    SE3Pose a{rodrigues(random_vec(rng, 2.0)), random_vec(rng, 5.0)};
    SE3Pose b{rodrigues(random_vec(rng, 2.0)), random_vec(rng, 5.0)};
    const SE3Pose ab = a * b;
    EXPECT_LT((ab.matrix() - a.matrix() * b.matrix()).norm(), 1e-12);
    EXPECT_LT(((a * a.inverse()).matrix() - Mat4::Identity()).norm(), 1e-12);
    const SE3Pose back = SE3Pose::from_row_major(a.row_major());
    EXPECT_EQ(back.matrix(), a.matrix());
  }
}

TEST(Pose, FromMatrixRejectsNothingButCopies) {
  Mat4 m = Mat4::Identity();
  m(0, 3) = 4.0;
  EXPECT_DOUBLE_EQ(SE3Pose::from_matrix(m).translation.x(), 4.0);
}

TEST(Camera, ComposeAppliesCorrectionOnTheRight) {
  SE3Pose ego{rodrigues(Vec3(0, 0, 0.3)), Vec3(10, 2, 0)};
  SE3Pose ext{rodrigues(Vec3(-1.2, 0.1, 0)), Vec3(1.5, 0, 1.6)};
  ExtrinsicCorrection c;
  c.phi = Vec3(0.001, -0.0005, 0.0002);
  c.delta_t = Vec3(0.02, -0.01, 0.03);
  const Mat4 expected = ego.matrix() * ext.matrix() * SE3Pose{rodrigues(c.phi), c.delta_t}.matrix();
  EXPECT_LT((compose_camera_pose(ego, ext, c).matrix() - expected).norm(), 1e-12);
}

TEST(Camera, ClampRescalesRotationAndClipsTranslation) {
  ExtrinsicCorrection c;
  c.phi = Vec3(0.01, 0.0, 0.0);  // about 0.57 degrees
  c.delta_t = Vec3(0.5, -0.05, -0.3);
  c.clamp();
  EXPECT_NEAR(c.phi.norm(), 0.1 * M_PI / 180.0, 1e-15);
  EXPECT_NEAR(c.phi.normalized().x(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(c.delta_t.x(), 0.1);
  EXPECT_DOUBLE_EQ(c.delta_t.y(), -0.05);
  EXPECT_DOUBLE_EQ(c.delta_t.z(), -0.1);
}

TEST(Camera, ProjectUnprojectRoundTrip) {
  const SE3Pose cam = oracle::look_at(Vec3(0, 0, 2), Vec3(5, 1, 0));
  const CameraIntrinsics K = oracle::pinhole(64, 48, 40.0);
  for (double u : {0.5, 10.25, 63.5}) {
    for (double v : {0.5, 20.0, 47.5}) {
      const Vec3 p = unproject(u, v, 3.7, cam, K);
      const Projection pr = project(p, cam, K);
      ASSERT_TRUE(pr.valid);
      EXPECT_NEAR(pr.u, u, 1e-12);
      EXPECT_NEAR(pr.v, v, 1e-12);
      EXPECT_NEAR(pr.depth, 3.7, 1e-12);
    }
  }
}

TEST(Camera, PointsBehindNearPlaneAreInvalid) {
  const SE3Pose cam = SE3Pose::identity();
  const CameraIntrinsics K = oracle::pinhole(10, 10, 10.0);
  EXPECT_FALSE(project(Vec3(0, 0, 0.05), cam, K).valid);
  EXPECT_FALSE(project(Vec3(0, 0, -1), cam, K).valid);
  EXPECT_TRUE(project(Vec3(0, 0, 0.2), cam, K).valid);
}

TEST(Camera, PixelCenterConvention) {
  const CameraIntrinsics K = oracle::pinhole(4, 4, 2.0);
  const Projection pr = project(Vec3(0, 0, 1), SE3Pose::identity(), K);
  EXPECT_DOUBLE_EQ(pr.u, 2.0);  // boundary between columns 1 and 2
  EXPECT_DOUBLE_EQ(pr.v, 2.0);
}

TEST(Camera, IntrinsicsValidate) {
  CameraIntrinsics K = oracle::pinhole(10, 10, 5.0);
  EXPECT_NO_THROW(K.validate());
  K.fx = 0.0;
  EXPECT_THROW(K.validate(), UsageError);
  K = oracle::pinhole(10, 10, 5.0);
  K.cx = 20.0;
  EXPECT_THROW(K.validate(), UsageError);
}
