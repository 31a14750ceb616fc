#include "roadmesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "roadmesh/error.hpp"

namespace roadmesh {

template <typename A, typename B>
double psnr(const Image<A>& img, const Image<B>& ref, const ImageU8* mask) {
  if (!img.same_shape(ref.width, ref.height) || img.channels != ref.channels) {
    throw UsageError("psnr: image shapes differ");
  }
  if (mask && !mask->same_shape(img.width, img.height)) throw UsageError("psnr: mask shape differs");
  double sse = 0.0;
  std::size_t count = 0;
  const std::size_t ch = static_cast<std::size_t>(img.channels);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (mask && !mask->data[p]) continue;
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = static_cast<double>(img.data[p * ch + c]) - static_cast<double>(ref.data[p * ch + c]);
      sse += d * d;
    }
    count += ch;
  }
  if (count == 0) throw UsageError("psnr: empty mask");
  const double mse = sse / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

template double psnr(const Image<float>&, const Image<float>&, const ImageU8*);
template double psnr(const Image<double>&, const Image<double>&, const ImageU8*);
template double psnr(const Image<float>&, const Image<double>&, const ImageU8*);
template double psnr(const Image<double>&, const Image<float>&, const ImageU8*);

double miou(const ImageU8& pred, const ImageU8& gt, const ImageU8* mask, int K) {
  if (!pred.same_shape(gt.width, gt.height)) throw UsageError("miou: image shapes differ");
  if (mask && !mask->same_shape(gt.width, gt.height)) throw UsageError("miou: mask shape differs");
  std::vector<std::size_t> tp(static_cast<std::size_t>(K), 0), fp(tp), fn(tp), present(tp);
  for (std::size_t p = 0; p < gt.pixel_count(); ++p) {
    if (mask && !mask->data[p]) continue;
    const int g = gt.data[p];
    if (g >= K) continue;
    const int q = pred.data[p];
    ++present[static_cast<std::size_t>(g)];
    if (q == g) {
      ++tp[static_cast<std::size_t>(g)];
    } else {
      ++fn[static_cast<std::size_t>(g)];
      if (q < K) ++fp[static_cast<std::size_t>(q)];
    }
  }
  double sum = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(K); ++c) {
    if (present[c] == 0) continue;
    sum += static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c] + fn[c]);
    ++classes;
  }
  if (classes == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * sum / classes;
}

namespace {

inline double sqdist(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

double filtered_mean(std::vector<double> d, double keep_fraction) {
  std::sort(d.begin(), d.end());
  const double want = std::ceil(keep_fraction * static_cast<double>(d.size()) - 1e-9);
  const std::size_t keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 1.0)), 1, d.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) sum += d[i];
  return sum / static_cast<double>(keep);
}

// Uniform grid over the target bounding box, cells stored CSR style.
class PointGrid {
 public:
  explicit PointGrid(std::span<const Vec3> pts) : pts_(pts) {
    lo_ = pts[0];
    Vec3 hi = pts[0];
    for (const Vec3& p : pts) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 ext = hi - lo_;
    const double emax = std::max(ext.maxCoeff(), 1e-9);
    const Vec3 clipped = ext.cwiseMax(emax * 1e-3);
    const double n = static_cast<double>(pts.size());
    cell_ = std::cbrt(4.0 * clipped.prod() / n);
    for (int i = 0; i < 3; ++i) dims_[i] = 1 + static_cast<int>(std::floor(ext[i] / cell_));
    // Keep the cell count within a few times the point count.
    while (static_cast<double>(dims_[0]) * dims_[1] * dims_[2] > 8.0 * n + 64.0) {
      cell_ *= 1.5;
      for (int i = 0; i < 3; ++i) dims_[i] = 1 + static_cast<int>(std::floor(ext[i] / cell_));
    }
    const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    start_.assign(ncell + 1, 0);
    std::vector<std::size_t> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = linear(cell_coord(pts[i], 0), cell_coord(pts[i], 1), cell_coord(pts[i], 2));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
    items_.resize(pts.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }

  double nearest(const Vec3& q) const {
    // Query cell may lie outside the grid; rings are clipped to it.
    std::array<long, 3> qc{};
    for (int i = 0; i < 3; ++i) qc[static_cast<std::size_t>(i)] = static_cast<long>(std::floor((q[i] - lo_[i]) / cell_));
    long min_ring = 0;
    long max_ring = 0;
    for (int i = 0; i < 3; ++i) {
      const long c = qc[static_cast<std::size_t>(i)];
      const long top = dims_[i] - 1;
      min_ring = std::max(min_ring, c < 0 ? -c : (c > top ? c - top : 0L));
      max_ring = std::max({max_ring, std::abs(c), std::abs(c - top)});
    }
    double best = std::numeric_limits<double>::infinity();
    for (long k = min_ring; k <= max_ring; ++k) {
      const long x0 = std::max(0L, qc[0] - k), x1 = std::min<long>(dims_[0] - 1, qc[0] + k);
      const long y0 = std::max(0L, qc[1] - k), y1 = std::min<long>(dims_[1] - 1, qc[1] + k);
      const long z0 = std::max(0L, qc[2] - k), z1 = std::min<long>(dims_[2] - 1, qc[2] + k);
      for (long x = x0; x <= x1; ++x) {
        const long dx = std::abs(x - qc[0]);
        for (long y = y0; y <= y1; ++y) {
          const long dxy = std::max(dx, std::abs(y - qc[1]));
          for (long z = z0; z <= z1; ++z) {
            if (std::max(dxy, std::abs(z - qc[2])) != k) continue;  // shell only
            const std::size_t c = linear(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
            for (std::size_t i = start_[c]; i < start_[c + 1]; ++i) best = std::min(best, sqdist(q, pts_[items_[i]]));
          }
        }
      }
      // Everything outside the (2k+1)^3 block is at least k cells away; one
      // cell of slack absorbs rounding in the cell assignment.
      const double bound = static_cast<double>(k - 1) * cell_;
      if (k >= 1 && best <= bound * bound) break;
    }
    return best;
  }

 private:
  int cell_coord(const Vec3& p, int axis) const {
    const int c = static_cast<int>(std::floor((p[axis] - lo_[axis]) / cell_));
    return std::clamp(c, 0, dims_[axis] - 1);
  }
  std::size_t linear(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
  }

  std::span<const Vec3> pts_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> items_;
};

std::vector<double> brute_nearest(std::span<const Vec3> queries, std::span<const Vec3> targets) {
  std::vector<double> out(queries.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (const Vec3& t : targets) out[i] = std::min(out[i], sqdist(queries[i], t));
  }
  return out;
}

void check_nonempty(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw UsageError("chamfer: point clouds must be non-empty");
}

}  // namespace

std::vector<double> nearest_squared_distances(std::span<const Vec3> queries, std::span<const Vec3> targets) {
  if (targets.empty()) throw UsageError("nearest_squared_distances: empty target set");
  const PointGrid grid(targets);
  std::vector<double> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = grid.nearest(queries[i]);
  return out;
}

double chamfer(const PointCloud& a, const PointCloud& b, double keep_fraction) {
  check_nonempty(a, b);
  return filtered_mean(nearest_squared_distances(a.points, b.points), keep_fraction) +
         filtered_mean(nearest_squared_distances(b.points, a.points), keep_fraction);
}

double chamfer_brute_force(const PointCloud& a, const PointCloud& b, double keep_fraction) {
  check_nonempty(a, b);
  return filtered_mean(brute_nearest(a.points, b.points), keep_fraction) +
         filtered_mean(brute_nearest(b.points, a.points), keep_fraction);
}

PointCloud filter_classes(const PointCloud& cloud, std::span<const int> allow) {
  if (cloud.classes.empty()) return cloud;
  const std::unordered_set<int> keep(allow.begin(), allow.end());
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keep.count(cloud.classes[i])) {
      out.points.push_back(cloud.points[i]);
      out.classes.push_back(cloud.classes[i]);
    }
  }
  return out;
}

double depth_rmse(const ImageD& rendered, const ImageD& reference, const ImageU8* mask) {
  if (!rendered.same_shape(reference.width, reference.height)) throw UsageError("depth_rmse: shapes differ");
  if (mask && !mask->same_shape(reference.width, reference.height)) throw UsageError("depth_rmse: mask shape differs");
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < reference.pixel_count(); ++p) {
    if (mask && !mask->data[p]) continue;
    const double ref = reference.data[p];
    if (!std::isfinite(ref) || !(ref > 0.0)) continue;
    const double d = rendered.data[p] - ref;
    sse += d * d;
    ++n;
  }
  if (n == 0) throw UsageError("depth_rmse: empty mask");
  return std::sqrt(sse / static_cast<double>(n));
}

nlohmann::json metric_value(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace roadmesh
