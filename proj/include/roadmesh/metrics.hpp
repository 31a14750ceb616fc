#pragma once

// Reconstruction quality metrics: PSNR, mIoU, filtered chamfer distance and
// depth RMSE.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "roadmesh/geometry.hpp"
#include "roadmesh/image.hpp"

namespace roadmesh {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> classes;  // empty, or one id per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline constexpr std::uint8_t kIgnoreClass = 255;

// 10 log10(1 / MSE) over masked pixels and all channels. +inf when the images
// agree exactly. mask may be null (all pixels). Throws UsageError on an empty
// mask or shape mismatch.
template <typename A, typename B>
double psnr(const Image<A>& img, const Image<B>& ref, const ImageU8* mask);

// Percent. Per-class IoU over masked pixels whose gt id is < K (ids >= K,
// including kIgnoreClass, are skipped), averaged over classes present in gt.
// NaN when no class is present.
double miou(const ImageU8& pred, const ImageU8& gt, const ImageU8* mask, int K);

// Per direction: squared nearest-neighbor distances, the largest
// (1 - keep_fraction) share dropped (ceil(keep * n) kept, at least one),
// mean of the rest. Returns the sum of both directions.
double chamfer(const PointCloud& a, const PointCloud& b, double keep_fraction = 0.97);

// Same value computed with an O(n*m) scan; used as a cross-check.
double chamfer_brute_force(const PointCloud& a, const PointCloud& b, double keep_fraction = 0.97);

// Keeps points whose class id is in allow (clouds without classes pass through).
PointCloud filter_classes(const PointCloud& cloud, std::span<const int> allow);

// Squared distance from each query point to its nearest target point, via a
// uniform hash grid. Exact: agrees bit-for-bit with a brute-force scan.
std::vector<double> nearest_squared_distances(std::span<const Vec3> queries, std::span<const Vec3> targets);

// Root mean squared difference over mask AND finite positive reference.
double depth_rmse(const ImageD& rendered, const ImageD& reference, const ImageU8* mask);

// Serialize +inf / NaN as strings ("inf", "nan") so reports stay valid JSON.
nlohmann::json metric_value(double v);

}  // namespace roadmesh
