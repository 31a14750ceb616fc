#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "roadmesh/error.hpp"
#include "roadmesh/losses.hpp"

using namespace roadmesh;

namespace {

struct Case {
  RenderOutput render;
  TrainingView view;
};

Case make_case(int w, int h, int K, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Case c;
  c.render.color = ImageD(w, h, 3);
  c.render.semantics = ImageD(w, h, K);
  c.render.depth = ImageD(w, h, 1);
  c.render.mask = ImageU8(w, h, 1);
  c.view.image = ImageF(w, h, 3);
  c.view.labels = ImageU8(w, h, 1);
  c.view.supervision_mask = ImageU8(w, h, 1);
  for (double& v : c.render.color.data) v = u(rng);
  for (double& v : c.render.semantics.data) v = 4.0 * u(rng) - 2.0;
  for (double& v : c.render.depth.data) v = 1.0 + 10.0 * u(rng);
  for (auto& v : c.render.mask.data) v = u(rng) < 0.8;
  for (float& v : c.view.image.data) v = static_cast<float>(u(rng));
  for (auto& v : c.view.labels.data) v = static_cast<std::uint8_t>(u(rng) * K);
  for (auto& v : c.view.supervision_mask.data) v = u(rng) < 0.9;
  return c;
}

LossTerm color(const std::vector<Case>& cs) {
  std::vector<const RenderOutput*> r;
  std::vector<const TrainingView*> v;
  for (const Case& c : cs) {
    r.push_back(&c.render);
    v.push_back(&c.view);
  }
  return color_loss(r, v);
}

LossTerm sem(const std::vector<Case>& cs) {
  std::vector<const RenderOutput*> r;
  std::vector<const TrainingView*> v;
  for (const Case& c : cs) {
    r.push_back(&c.render);
    v.push_back(&c.view);
  }
  return sem_loss(r, v);
}

LossTerm depth(const std::vector<Case>& cs) {
  std::vector<const RenderOutput*> r;
  std::vector<const TrainingView*> v;
  for (const Case& c : cs) {
    r.push_back(&c.render);
    v.push_back(&c.view);
  }
  return depth_loss(r, v);
}

}  // namespace

TEST(ColorLoss, PerfectAndConstantResidual) {
  Case c = make_case(5, 4, 3, 1);
  for (std::size_t i = 0; i < c.render.color.data.size(); ++i) c.render.color.data[i] = c.view.image.data[i];
  EXPECT_EQ(color({c}).value, 0.0);
  for (std::size_t i = 0; i < c.render.color.data.size(); ++i) c.render.color.data[i] = c.view.image.data[i] + 0.5;
  EXPECT_NEAR(color({c}).value, 0.5, 1e-12);
}

TEST(ColorLoss, RandomHandSum) {
  const Case c = make_case(4, 4, 3, 2);
  double sum = 0.0;
  int n = 0;
  for (std::size_t p = 0; p < 16; ++p) {
    if (!c.render.mask.data[p] || !c.view.supervision_mask.data[p]) continue;
    ++n;
    for (int ch = 0; ch < 3; ++ch) sum += std::abs(c.render.color.data[3 * p + ch] - c.view.image.data[3 * p + ch]);
  }
  const LossTerm t = color({c});
  EXPECT_EQ(t.count, static_cast<std::size_t>(n));
  EXPECT_NEAR(t.value, sum / (3.0 * n), 1e-14);
}

TEST(ColorLoss, GradientMatchesFiniteDifference) {
  Case c = make_case(4, 4, 3, 3);
  const LossTerm t = color({c});
  const double h = 1e-7;
  for (std::size_t i = 0; i < c.render.color.data.size(); ++i) {
    const double saved = c.render.color.data[i];
    c.render.color.data[i] = saved + h;
    const double a = color({c}).value;
    c.render.color.data[i] = saved - h;
    const double b = color({c}).value;
    c.render.color.data[i] = saved;
    EXPECT_NEAR(t.grads[0].data[i], (a - b) / (2 * h), 1e-7);
  }
}

TEST(ColorLoss, EmptyMask) {
  Case c = make_case(3, 3, 2, 4);
  for (auto& m : c.render.mask.data) m = 0;
  const LossTerm t = color({c});
  EXPECT_TRUE(t.empty);
  EXPECT_EQ(t.value, 0.0);
}

TEST(SemLoss, SaturatedAndUniform) {
  Case c = make_case(4, 4, 7, 5);
  for (std::size_t p = 0; p < 16; ++p) {
    for (int k = 0; k < 7; ++k) c.render.semantics.data[7 * p + k] = (k == c.view.labels.data[p]) ? 30.0 : 0.0;
  }
  EXPECT_LT(sem({c}).value, 1e-8);
  for (double& v : c.render.semantics.data) v = 0.0;
  EXPECT_NEAR(sem({c}).value, std::log(7.0), 1e-12);
}

TEST(SemLoss, RandomSoftmaxRecomputation) {
  Case c = make_case(4, 4, 3, 6);
  c.view.labels.data[5] = 255;  // ignored
  double sum = 0.0;
  int n = 0;
  for (std::size_t p = 0; p < 16; ++p) {
    if (!c.render.mask.data[p] || !c.view.supervision_mask.data[p] || c.view.labels.data[p] >= 3) continue;
    double z = 0.0;
    for (int k = 0; k < 3; ++k) z += std::exp(c.render.semantics.data[3 * p + k]);
    sum += -std::log(std::exp(c.render.semantics.data[3 * p + c.view.labels.data[p]]) / z);
    ++n;
  }
  const LossTerm t = sem({c});
  EXPECT_EQ(t.count, static_cast<std::size_t>(n));
  EXPECT_NEAR(t.value, sum / n, 1e-12);
  const double h = 1e-6;
  for (std::size_t i = 0; i < c.render.semantics.data.size(); ++i) {
    const double saved = c.render.semantics.data[i];
    c.render.semantics.data[i] = saved + h;
    const double a = sem({c}).value;
    c.render.semantics.data[i] = saved - h;
    const double b = sem({c}).value;
    c.render.semantics.data[i] = saved;
    EXPECT_NEAR(t.grads[0].data[i], (a - b) / (2 * h), 1e-8);
  }
}

TEST(Losses, DuplicatedViewsLeaveValuesUnchanged) {
  const Case a = make_case(6, 5, 4, 7), b = make_case(6, 5, 4, 8);
  const double c1 = color({a, b}).value, c2 = color({a, b, a, b}).value;
  const double s1 = sem({a, b}).value, s2 = sem({a, b, a, b}).value;
  EXPECT_NEAR(c1, c2, 1e-12 * c1);
  EXPECT_NEAR(s1, s2, 1e-12 * s1);
}

TEST(DepthLoss, ClosedForms) {
  Case c = make_case(4, 4, 2, 9);
  for (auto& m : c.render.mask.data) m = 1;
  c.render.depth.data[5] = 2.0;
  c.render.depth.data[10] = 7.25;
  c.view.sparse_depth = {{1.5f, 1.5f, 2.0f}, {2.9f, 2.1f, 7.25f}};
  EXPECT_EQ(depth({c}).value, 0.0);
  c.view.sparse_depth[0].depth = 1.75f;
  c.view.sparse_depth.pop_back();
  EXPECT_DOUBLE_EQ(depth({c}).value, 0.25);
  c.render.mask.data[5] = 0;
  EXPECT_TRUE(depth({c}).empty);
}

TEST(DepthLoss, RandomResum) {
  Case c = make_case(8, 8, 2, 10);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 8.0f), d(1.0f, 12.0f);
  for (int i = 0; i < 30; ++i) c.view.sparse_depth.push_back({u(rng), u(rng), d(rng)});
  double sum = 0.0;
  int n = 0;
  for (const DepthSample& s : c.view.sparse_depth) {
    const std::size_t p = static_cast<std::size_t>(std::floor(s.v)) * 8 + static_cast<std::size_t>(std::floor(s.u));
    if (!c.render.mask.data[p]) continue;
    sum += std::abs(c.render.depth.data[p] - s.depth);
    ++n;
  }
  const LossTerm t = depth({c});
  EXPECT_EQ(t.count, static_cast<std::size_t>(n));
  EXPECT_NEAR(t.value, sum / n, 1e-12);
}

TEST(Losses, ShapeMismatchIsUsageError) {
  Case a = make_case(4, 4, 2, 1);
  a.view.image = ImageF(3, 4, 3);
  EXPECT_THROW(color({a}), UsageError);
}
