#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "roadmesh/error.hpp"
#include "roadmesh/optimizer.hpp"

using namespace roadmesh;

namespace {

// Textbook Adam on one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Adam, FirstStepOfUnitGradient) {
  std::vector<double> p{0.0};
  AdamState s(1);
  adam_step(p, std::vector<double>{1.0}, s, 0.1, {});
  EXPECT_NEAR(p[0], -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(s.t[0], 1u);
}

TEST(Adam, TracksScalarOracle) {
  std::vector<double> p{0.3};
  AdamState s(1);
  ScalarAdam ref;
  double q = 0.3;
  for (int i = 0; i < 50; ++i) {
    const double g = std::sin(0.7 * i) + 0.2;
    adam_step(p, std::vector<double>{g}, s, 0.01, {});
    q = ref.step(q, g, 0.01);
    EXPECT_NEAR(p[0], q, 1e-14);
  }
}

TEST(Adam, ZeroGradientAdvancesStepOnly) {
  std::vector<double> p{1.5, -2.0};
  AdamState s(2);
  adam_step(p, std::vector<double>{0.0, 0.0}, s, 0.1, {});
  EXPECT_EQ(p[0], 1.5);
  EXPECT_EQ(p[1], -2.0);
  EXPECT_EQ(s.t[0], 1u);
}

TEST(Adam, NonFiniteGradientLeavesEverythingUntouched) {
  std::vector<double> p{1.0, 2.0};
  AdamState s(2);
  adam_step(p, std::vector<double>{0.5, 0.5}, s, 0.1, {});
  const std::vector<double> before = p;
  const AdamState saved = s;
  EXPECT_THROW(adam_step(p, std::vector<double>{0.1, std::numeric_limits<double>::quiet_NaN()}, s, 0.1, {}, "z"),
               NumericError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.m, saved.m);
  EXPECT_EQ(s.t, saved.t);
  EXPECT_THROW(adam_step_rows(p, std::vector<double>{INFINITY}, std::vector<int>{0}, 1, s, 0.1, {}), NumericError);
  EXPECT_EQ(p, before);
}

TEST(Adam, SparseRowsUsePerElementSteps) {
  std::vector<double> p(6, 0.0);
  AdamState s(6);
  // Row 1 of width 2 stepped three times, row 2 once.
  for (int i = 0; i < 3; ++i) adam_step_rows(p, std::vector<double>{1.0, -1.0}, std::vector<int>{1}, 2, s, 0.1, {});
  adam_step_rows(p, std::vector<double>{2.0, 2.0}, std::vector<int>{2}, 2, s, 0.1, {});
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 0.0);
  ScalarAdam a, b;
  double qa = 0.0, qb = 0.0;
  for (int i = 0; i < 3; ++i) qa = a.step(qa, 1.0, 0.1);
  qb = b.step(qb, 2.0, 0.1);
  EXPECT_NEAR(p[2], qa, 1e-15);
  EXPECT_NEAR(p[3], -qa, 1e-15);
  EXPECT_NEAR(p[4], qb, 1e-15);
  EXPECT_EQ(s.t[2], 3u);
  EXPECT_EQ(s.t[4], 1u);
  EXPECT_EQ(s.t[0], 0u);
}

TEST(Adam, IdenticalGroupsIdenticalTrajectories) {
  std::vector<double> a{0.1, 0.2, 0.3}, b = a;
  AdamState sa(3), sb(3);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> g{std::cos(i * 1.0), -0.5, i * 0.01};
    adam_step(a, g, sa, 0.05, {});
    adam_step(b, g, sb, 0.05, {});
  }
  EXPECT_EQ(a, b);
}
