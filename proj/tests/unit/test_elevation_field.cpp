#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "roadmesh/elevation_field.hpp"
#include "roadmesh/error.hpp"
#include "roadmesh/parallel.hpp"

using namespace roadmesh;

namespace {

PositionalEncoding encoding(int freqs = 5) {
  PositionalEncoding pe;
  pe.num_freqs = freqs;
  pe.bounds = {-10.0, -4.0, 30.0, 16.0};
  return pe;
}

void randomize(ElevationField& f, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& p : f.parameters()) p = u(rng);
}

// Straight-line evaluation of the network for one point.
double scalar_eval(const ElevationField& f, const Vec2& xy) {
  const PositionalEncoding& pe = f.encoding();
  const Vec2 n(2.0 * (xy.x() - pe.bounds.xmin) / pe.bounds.width() - 1.0,
               2.0 * (xy.y() - pe.bounds.ymin) / pe.bounds.height() - 1.0);
  std::vector<double> h{n.x(), n.y()};
  for (int k = 0; k < pe.num_freqs; ++k) {
    const double w = std::pow(2.0, k) * M_PI;
    h.push_back(std::sin(w * n.x()));
    h.push_back(std::cos(w * n.x()));
    h.push_back(std::sin(w * n.y()));
    h.push_back(std::cos(w * n.y()));
  }
  for (int l = 0; l < f.layer_count(); ++l) {
    const auto W = f.weight(l);
    const auto b = f.bias(l);
    std::vector<double> next(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index o = 0; o < W.rows(); ++o) {
      double a = b(o);
      for (Eigen::Index i = 0; i < W.cols(); ++i) a += W(o, i) * h[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(o)] = (l + 1 < f.layer_count()) ? std::max(a, 0.0) : a;
    }
    h = next;
  }
  return h[0];
}

std::vector<Vec2> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-10, 30), uy(-4, 16);
  std::vector<Vec2> p;
  for (std::size_t i = 0; i < n; ++i) p.emplace_back(ux(rng), uy(rng));
  return p;
}

}  // namespace

TEST(Encoding, CenterGivesZeroSinesUnitCosines) {
  const PositionalEncoding pe = encoding(5);
  EXPECT_EQ(pe.dim(), 22);
  std::vector<double> f(22);
  pe.encode(Vec2(10.0, 6.0), f.data());
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 0.0);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(f[2 + 4 * k], 0.0);
    EXPECT_EQ(f[3 + 4 * k], 1.0);
    EXPECT_EQ(f[4 + 4 * k], 0.0);
    EXPECT_EQ(f[5 + 4 * k], 1.0);
  }
}

TEST(Encoding, MatchesPerTermFormula) {
  const PositionalEncoding pe = encoding(4);
  std::vector<double> f(static_cast<std::size_t>(pe.dim()));
  for (const Vec2& p : random_points(20, 2)) {
    pe.encode(p, f.data());
    const double x = 2.0 * (p.x() + 10.0) / 40.0 - 1.0;
    const double y = 2.0 * (p.y() + 4.0) / 20.0 - 1.0;
    EXPECT_NEAR(f[0], x, 1e-15);
    EXPECT_NEAR(f[1], y, 1e-15);
    for (int k = 0; k < 4; ++k) {
      const double w = std::pow(2.0, k) * M_PI;
      EXPECT_NEAR(f[static_cast<std::size_t>(2 + 4 * k)], std::sin(w * x), 1e-12);
      EXPECT_NEAR(f[static_cast<std::size_t>(3 + 4 * k)], std::cos(w * x), 1e-12);
      EXPECT_NEAR(f[static_cast<std::size_t>(4 + 4 * k)], std::sin(w * y), 1e-12);
      EXPECT_NEAR(f[static_cast<std::size_t>(5 + 4 * k)], std::cos(w * y), 1e-12);
    }
  }
}

TEST(Field, DefaultInitIsFlatAndShaped) {
  ElevationField f(encoding(5), MlpConfig{}, 3);
  EXPECT_EQ(f.layer_count(), 9);
  EXPECT_EQ(f.parameter_count(), static_cast<std::size_t>(22 * 128 + 128 + 7 * (128 * 128 + 128) + 128 + 1));
  for (double z : f.evaluate(random_points(50, 1))) EXPECT_EQ(z, 0.0);
  const double bound = std::sqrt(6.0 / 22.0);
  EXPECT_LE(f.weight(0).cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(f.weight(0).cwiseAbs().maxCoeff(), 0.9 * bound);
}

TEST(Field, BiasOnlyNetwork) {
  ElevationField f(encoding(2), MlpConfig{2, 8}, 0);
  for (double& p : f.parameters()) p = 0.0;
  f.bias(2)(0) = 0.75;
  for (double z : f.evaluate(random_points(10, 4))) EXPECT_EQ(z, 0.75);
}

TEST(Field, MatchesScalarEvaluation) {
  ElevationField f(encoding(3), MlpConfig{3, 16}, 1);
  randomize(f, 5, 0.4);
  const auto pts = random_points(40, 6);
  const std::vector<double> z = f.evaluate(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(z[i], scalar_eval(f, pts[i]), 1e-12);
}

TEST(Field, BatchEqualsSingleCallsBitwise) {
  ElevationField f(encoding(5), MlpConfig{}, 7);
  randomize(f, 8, 0.1);
  const auto pts = random_points(600, 9);
  const std::vector<double> batch = f.evaluate(pts);
  for (std::size_t i : {0u, 1u, 2u, 255u, 256u, 599u}) {
    const std::vector<double> one = f.evaluate(std::span<const Vec2>(&pts[i], 1));
    EXPECT_EQ(one[0], batch[i]) << i;
  }
  const std::vector<double> cached = f.forward(pts);
  EXPECT_EQ(cached, batch);
}

TEST(Field, ZeroUpstreamGivesZeroGradient) {
  ElevationField f(encoding(2), MlpConfig{2, 4}, 1);
  randomize(f, 2);
  const auto pts = random_points(5, 3);
  f.forward(pts);
  for (double g : f.backward(std::vector<double>(5, 0.0))) EXPECT_EQ(g, 0.0);
}

TEST(Field, BackwardRequiresMatchingCache) {
  ElevationField f(encoding(2), MlpConfig{2, 4}, 1);
  f.forward(random_points(5, 3));
  EXPECT_THROW(f.backward(std::vector<double>(4, 1.0)), UsageError);
  f.invalidate_cache();
  EXPECT_THROW(f.backward(std::vector<double>(5, 1.0)), UsageError);
}

TEST(Field, ParameterGradientMatchesFiniteDifference) {
  ElevationField f(encoding(2), MlpConfig{2, 4}, 1);
  randomize(f, 21, 0.8);
  const auto pts = random_points(7, 22);
  const std::vector<double> up{0.3, -1.2, 0.7, 2.0, -0.4, 0.9, 1.1};
  f.forward(pts);
  const std::vector<double> g = f.backward(up);
  ASSERT_EQ(g.size(), f.parameter_count());
  const auto objective = [&] {
    const std::vector<double> z = f.evaluate(pts);
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += up[i] * z[i];
    return s;
  };
  const double h = 1e-4;
  for (std::size_t k = 0; k < f.parameter_count(); ++k) {
    const double saved = f.parameters()[k];
    f.parameters()[k] = saved + h;
    const double a = objective();
    f.parameters()[k] = saved - h;
    const double b = objective();
    f.parameters()[k] = saved;
    const double fd = (a - b) / (2 * h);
    EXPECT_LE(std::abs(fd - g[k]), 1e-4 * std::max({std::abs(fd), std::abs(g[k]), 1e-3})) << k;
  }
}

TEST(Field, DuplicatePointDoublesGradient) {
  ElevationField f(encoding(3), MlpConfig{3, 8}, 1);
  randomize(f, 4);
  const auto one = random_points(1, 5);
  const std::vector<Vec2> two{one[0], one[0]};
  f.forward(one);
  const std::vector<double> g1 = f.backward(std::vector<double>{1.0});
  f.forward(two);
  const std::vector<double> g2 = f.backward(std::vector<double>{1.0, 1.0});
  for (std::size_t k = 0; k < g1.size(); ++k) EXPECT_NEAR(g2[k], 2.0 * g1[k], 1e-12 * std::max(1.0, std::abs(g1[k])));
}

TEST(Field, GradientIndependentOfThreadCount) {
  ElevationField f(encoding(5), MlpConfig{}, 7);
  randomize(f, 8, 0.1);
  const auto pts = random_points(3000, 10);
  std::vector<double> up(pts.size());
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = std::sin(static_cast<double>(i));
  set_num_threads(1);
  f.forward(pts);
  const std::vector<double> a = f.backward(up);
  set_num_threads(4);
  f.forward(pts);
  const std::vector<double> b = f.backward(up);
  set_num_threads(1);
  EXPECT_EQ(a, b);
}

TEST(Field, SaveLoadRoundTripsAsFloat32) {
  ElevationField f(encoding(3), MlpConfig{2, 8}, 2);
  randomize(f, 3);
  const auto path = std::filesystem::temp_directory_path() / "roadmesh_field_test.bin";
  f.save(path);
  const ElevationField g = ElevationField::load(path);
  ASSERT_EQ(g.parameter_count(), f.parameter_count());
  for (std::size_t k = 0; k < f.parameter_count(); ++k) {
    EXPECT_EQ(g.parameters()[k], static_cast<double>(static_cast<float>(f.parameters()[k])));
  }
  EXPECT_EQ(g.encoding().num_freqs, 3);
  EXPECT_EQ(g.config().width, 8);
}

TEST(Pretrain, TrajectoryPointsLaterallySpread) {
  const std::vector<SE3Pose> origin{SE3Pose::identity()};
  const auto pts = pretrain_points_from_trajectory(origin, 2.0, 1.0, 1.7);
  ASSERT_EQ(pts.size(), 5u);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(pts[static_cast<std::size_t>(k)].x(), 0.0);
    EXPECT_EQ(pts[static_cast<std::size_t>(k)].y(), k - 2.0);
    EXPECT_EQ(pts[static_cast<std::size_t>(k)].z(), -1.7);
  }
  SE3Pose turned{rodrigues(Vec3(0, 0, 0.7)), Vec3(3, 4, 5)};
  const auto rp = pretrain_points_from_trajectory(std::vector<SE3Pose>{turned}, 2.0, 1.0, 1.7);
  for (int k = -2; k <= 2; ++k) {
    const Vec3 expect = turned.rotation * Vec3(0, k, 0) + turned.translation;
    const Vec3& got = rp[static_cast<std::size_t>(k + 2)];
    EXPECT_NEAR(got.x(), expect.x(), 1e-12);
    EXPECT_NEAR(got.y(), expect.y(), 1e-12);
    EXPECT_NEAR(got.z(), 5.0 - 1.7, 1e-12);
  }
}

TEST(Pretrain, ExactOnZeroPlane) {
  ElevationField f(encoding(5), MlpConfig{}, 0);
  std::vector<Vec3> pts;
  for (const Vec2& p : random_points(64, 1)) pts.emplace_back(p.x(), p.y(), 0.0);
  EXPECT_EQ(field_rmse(f, pts), 0.0);
}

TEST(Pretrain, FitsRaisedPlane) {
  ElevationField f(encoding(5), MlpConfig{}, 0);
  std::vector<Vec3> pts;
  for (const Vec2& p : random_points(200, 1)) pts.emplace_back(p.x(), p.y(), 0.1);
  const PretrainReport r = pretrain(f, pts, 2000, 1e-3);
  EXPECT_NEAR(r.initial_rmse, 0.1, 1e-12);
  EXPECT_LT(r.final_rmse, 0.01);
  EXPECT_TRUE(r.monotone);
}

TEST(Pretrain, FitsTiltedPlane) {
  PositionalEncoding pe;
  pe.bounds = {0.0, -5.0, 20.0, 5.0};
  ElevationField f(pe, MlpConfig{}, 0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ux(0, 20), uy(-5, 5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) {
    const double x = ux(rng);
    pts.emplace_back(x, uy(rng), 0.05 * x);
  }
  const PretrainReport r = pretrain(f, pts, 2000, 1e-3);
  EXPECT_LT(r.final_rmse, 0.02);
}
