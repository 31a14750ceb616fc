#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "roadmesh/parallel.hpp"
#include "roadmesh/renderer.hpp"

using namespace roadmesh;

namespace {

// One big triangle facing an identity camera at depth d.
oracle::OwnedGeometry facing_triangle(double d, const Vec3& color, double size = 50.0) {
  oracle::OwnedGeometry g;
  g.num_classes = 2;
  g.positions = {{-size, -size, d}, {-size, size, d}, {size, 0.0, d}};
  g.faces = {{0, 1, 2}};
  for (int v = 0; v < 3; ++v) {
    g.rgb.insert(g.rgb.end(), {color.x(), color.y(), color.z()});
    g.sem.insert(g.sem.end(), {1.0, -1.0});
  }
  return g;
}

oracle::OwnedGeometry random_soup(std::mt19937_64& rng, int faces) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), d(1.0, 8.0), col(0.0, 1.0);
  oracle::OwnedGeometry g;
  g.num_classes = 3;
  for (int f = 0; f < faces; ++f) {
    const double depth = d(rng);
    const Vec3 c(u(rng) * depth, u(rng) * depth, depth);
    for (int k = 0; k < 3; ++k) {
      Vec3 p = c + Vec3(u(rng), u(rng), 0.5 * u(rng)) * (0.2 + 0.3 * depth);
      if (f % 10 == 9 && k == 0) p.z() = 0.05;  // straddles the near plane
      g.positions.push_back(p);
      for (int ch = 0; ch < 3; ++ch) g.rgb.push_back(col(rng));
      for (int ch = 0; ch < 3; ++ch) g.sem.push_back(u(rng));
    }
    g.faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
  }
  return g;
}

}  // namespace

TEST(Rasterize, ConstantColorFillsImage) {
  const auto g = facing_triangle(4.0, Vec3(0.2, 0.4, 0.6));
  const CameraIntrinsics K = oracle::pinhole(32, 24, 20.0);
  const RasterResult rr = rasterize(SE3Pose::identity(), K, g.view());
  for (std::size_t p = 0; p < rr.output.mask.pixel_count(); ++p) {
    ASSERT_EQ(rr.output.mask.data[p], 1);
    EXPECT_NEAR(rr.output.color.data[3 * p + 0], 0.2, 1e-12);
    EXPECT_NEAR(rr.output.color.data[3 * p + 1], 0.4, 1e-12);
    EXPECT_NEAR(rr.output.color.data[3 * p + 2], 0.6, 1e-12);
    EXPECT_NEAR(rr.output.depth.data[p], 4.0, 1e-12);
    EXPECT_NEAR(rr.output.semantics.data[2 * p], 1.0, 1e-12);
  }
}

TEST(Rasterize, EmptyFrustum) {
  const auto g = facing_triangle(-4.0, Vec3(1, 1, 1));
  const RasterResult rr = rasterize(SE3Pose::identity(), oracle::pinhole(16, 16, 10.0), g.view());
  for (auto m : rr.output.mask.data) EXPECT_EQ(m, 0);
  for (auto f : rr.fragments.face) EXPECT_EQ(f, -1);
}

TEST(Rasterize, BackFacingIsCulled) {
  auto g = facing_triangle(4.0, Vec3(1, 1, 1));
  std::swap(g.faces[0][1], g.faces[0][2]);
  const RasterResult rr = rasterize(SE3Pose::identity(), oracle::pinhole(16, 16, 10.0), g.view());
  for (auto m : rr.output.mask.data) EXPECT_EQ(m, 0);
}

TEST(Rasterize, StackedTrianglesNearestWins) {
  auto near = facing_triangle(5.0, Vec3(1, 0, 0), 3.0);
  const auto far = facing_triangle(7.0, Vec3(0, 1, 0), 10.0);
  // Far face first so the depth test, not the index, decides.
  oracle::OwnedGeometry g = far;
  for (const Vec3& p : near.positions) g.positions.push_back(p);
  g.faces.push_back({3, 4, 5});
  g.rgb.insert(g.rgb.end(), near.rgb.begin(), near.rgb.end());
  g.sem.insert(g.sem.end(), near.sem.begin(), near.sem.end());
  const CameraIntrinsics K = oracle::pinhole(48, 48, 30.0);
  const RasterResult rr = rasterize(SE3Pose::identity(), K, g.view());
  const oracle::RayCastImage ref = oracle::raycast(SE3Pose::identity(), K, g);
  std::size_t on_near = 0;
  for (std::size_t p = 0; p < ref.face.size(); ++p) {
    if (ref.ambiguous[p]) continue;
    EXPECT_EQ(rr.fragments.face[p], ref.face[p]);
    if (ref.face[p] == 1) {
      ++on_near;
      EXPECT_NEAR(rr.output.depth.data[p], 5.0, 1e-9);
    }
  }
  EXPECT_GT(on_near, 100u);
}

TEST(Rasterize, EqualDepthTieGoesToLowerIndex) {
  auto a = facing_triangle(3.0, Vec3(1, 0, 0));
  oracle::OwnedGeometry g = a;
  for (const Vec3& p : a.positions) g.positions.push_back(p);
  g.faces.push_back({3, 4, 5});
  g.rgb.insert(g.rgb.end(), {0, 0, 1, 0, 0, 1, 0, 0, 1});
  g.sem.insert(g.sem.end(), a.sem.begin(), a.sem.end());
  const RasterResult rr = rasterize(SE3Pose::identity(), oracle::pinhole(16, 16, 10.0), g.view());
  for (auto f : rr.fragments.face) EXPECT_EQ(f, 0);
}

TEST(Rasterize, RandomScenesMatchRayCast) {
  std::mt19937_64 rng(42);
  for (int scene = 0; scene < 10; ++scene) {
    const oracle::OwnedGeometry g = random_soup(rng, 40);
    const CameraIntrinsics K = oracle::pinhole(48, 40, 35.0);
    const SE3Pose cam{rodrigues(Vec3(0.05, -0.08, 0.1)), Vec3(0.1, -0.2, 0.0)};
    const RasterResult rr = rasterize(cam, K, g.view());
    const oracle::RayCastImage ref = oracle::raycast(cam, K, g);
    std::size_t compared = 0;
    for (std::size_t p = 0; p < ref.face.size(); ++p) {
      if (ref.ambiguous[p]) continue;
      ++compared;
      ASSERT_EQ(rr.output.mask.data[p], ref.face[p] >= 0 ? 1 : 0) << scene << " " << p;
      if (ref.face[p] < 0) continue;
      EXPECT_NEAR(rr.output.depth.data[p], ref.depth[p], 1e-6);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(rr.output.color.data[3 * p + c], ref.color[3 * p + c], 1e-9);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(rr.output.semantics.data[3 * p + c], ref.sem[3 * p + c], 1e-9);
    }
    EXPECT_GT(compared, ref.face.size() * 9 / 10);
  }
}

TEST(Rasterize, ThreadCountDoesNotChangeOutput) {
  const oracle::GradScene s = oracle::random_grad_scene(5, 96);
  set_num_threads(1);
  const RasterResult a = rasterize(s.camera.camera_to_world(), s.camera.intrinsics, s.geom.view());
  set_num_threads(4);
  const RasterResult b = rasterize(s.camera.camera_to_world(), s.camera.intrinsics, s.geom.view());
  ImageD g(96, 96, 1, 1.0);
  const RenderGradients ga = rasterize_backward(a.fragments, nullptr, nullptr, &g, s.camera, s.geom.view());
  set_num_threads(1);
  const RenderGradients gb = rasterize_backward(a.fragments, nullptr, nullptr, &g, s.camera, s.geom.view());
  EXPECT_EQ(a.output.color.data, b.output.color.data);
  EXPECT_EQ(a.output.depth.data, b.output.depth.data);
  EXPECT_EQ(a.fragments.face, b.fragments.face);
  EXPECT_EQ(ga.z, gb.z);
  EXPECT_EQ(ga.phi, gb.phi);
}

TEST(Backward, SinglePixelTouchesOnlyItsFace) {
  const oracle::GradScene s = oracle::random_grad_scene(3);
  const RasterResult rr = rasterize(s.camera.camera_to_world(), s.camera.intrinsics, s.geom.view());
  std::size_t p = 0;
  while (rr.fragments.face[p] < 0) ++p;
  ImageD gc(64, 64, 3, 0.0);
  gc.data[3 * p + 1] = 1.0;
  const RenderGradients g = rasterize_backward(rr.fragments, &gc, nullptr, nullptr, s.camera, s.geom.view(), {true, false});
  const Face& f = s.geom.faces[static_cast<std::size_t>(rr.fragments.face[p])];
  for (std::size_t v = 0; v < s.geom.positions.size(); ++v) {
    const auto it = std::find(f.begin(), f.end(), static_cast<int>(v));
    const double expect = it == f.end() ? 0.0 : rr.fragments.bary[p][static_cast<std::size_t>(it - f.begin())];
    EXPECT_EQ(g.rgb[3 * v + 0], 0.0);
    EXPECT_NEAR(g.rgb[3 * v + 1], expect, 1e-15);
    EXPECT_EQ(g.rgb[3 * v + 2], 0.0);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const oracle::GradCheck r = oracle::check_render_gradients(oracle::random_grad_scene(seed, 128), seed);
    EXPECT_LT(r.rgb, 1e-4) << seed;
    EXPECT_LT(r.sem, 1e-4) << seed;
    EXPECT_LT(r.z, 1e-2) << seed;
    EXPECT_LT(r.extrinsic, 1e-2) << seed;
    EXPECT_GT(r.geometry_pixels, 200u) << seed;
  }
}

TEST(Unproject, ConstantDepthLiesOnRays) {
  const CameraIntrinsics K = oracle::pinhole(8, 6, 5.0);
  ImageD depth(8, 6, 1, 5.0);
  ImageU8 mask(8, 6, 1, 1);
  mask.data[3] = 0;
  const auto pts = unproject_depth(depth, mask, SE3Pose::identity(), K);
  ASSERT_EQ(pts.size(), 47u);
  for (const Vec3& p : pts) EXPECT_NEAR(p.z(), 5.0, 1e-12);
  EXPECT_NEAR(pts[0].x(), (0.5 - 4.0) / 5.0 * 5.0, 1e-12);
}

TEST(Unproject, PointsLieOnTheirTriangles) {
  const oracle::GradScene s = oracle::random_grad_scene(8);
  const SE3Pose cam = s.camera.camera_to_world();
  const RasterResult rr = rasterize(cam, s.camera.intrinsics, s.geom.view());
  const auto pts = unproject_depth(rr.output.depth, rr.output.mask, cam, s.camera.intrinsics);
  std::size_t k = 0;
  for (std::size_t p = 0; p < rr.fragments.size(); ++p) {
    if (rr.fragments.face[p] < 0) continue;
    const Face& f = s.geom.faces[static_cast<std::size_t>(rr.fragments.face[p])];
    const Vec3& a = s.geom.positions[static_cast<std::size_t>(f[0])];
    const Vec3 n = (s.geom.positions[static_cast<std::size_t>(f[1])] - a)
                       .cross(s.geom.positions[static_cast<std::size_t>(f[2])] - a)
                       .normalized();
    EXPECT_LT(std::abs(n.dot(pts[k] - a)), 1e-4);
    const Projection pr = project(pts[k], cam, s.camera.intrinsics);
    EXPECT_NEAR(pr.u, static_cast<double>(p % 64) + 0.5, 1e-6);
    EXPECT_NEAR(pr.v, static_cast<double>(p / 64) + 0.5, 1e-6);
    ++k;
  }
  EXPECT_EQ(k, pts.size());
}
