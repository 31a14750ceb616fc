#include "roadmesh/losses.hpp"

#include <algorithm>
#include <cmath>

#include "roadmesh/error.hpp"

namespace roadmesh {

namespace {

void check_batch(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views) {
  if (renders.size() != views.size()) throw UsageError("loss: render/view count mismatch");
  for (std::size_t j = 0; j < renders.size(); ++j) {
    const RenderOutput& r = *renders[j];
    const TrainingView& v = *views[j];
    if (!v.image.same_shape(r.mask.width, r.mask.height) || !v.labels.same_shape(r.mask.width, r.mask.height) ||
        !v.supervision_mask.same_shape(r.mask.width, r.mask.height)) {
      throw UsageError("loss: view image shape differs from the render");
    }
  }
}

inline bool supervised(const RenderOutput& r, const TrainingView& v, std::size_t p) {
  return r.mask.data[p] != 0 && v.supervision_mask.data[p] != 0;
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

LossTerm color_loss(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views) {
  check_batch(renders, views);
  LossTerm out;
  for (std::size_t j = 0; j < renders.size(); ++j) {
    const RenderOutput& r = *renders[j];
    for (std::size_t p = 0; p < r.mask.pixel_count(); ++p) out.count += supervised(r, *views[j], p) ? 1 : 0;
  }
  out.grads.reserve(renders.size());
  for (const RenderOutput* r : renders) out.grads.emplace_back(r->mask.width, r->mask.height, 3, 0.0);
  if (out.count == 0) {
    out.empty = true;
    return out;
  }
  const double norm = 1.0 / (3.0 * static_cast<double>(out.count));
  double sum = 0.0;
  for (std::size_t j = 0; j < renders.size(); ++j) {
    const RenderOutput& r = *renders[j];
    const TrainingView& v = *views[j];
    ImageD& g = out.grads[j];
    for (std::size_t p = 0; p < r.mask.pixel_count(); ++p) {
      if (!supervised(r, v, p)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = r.color.data[p * 3 + c] - static_cast<double>(v.image.data[p * 3 + c]);
        sum += std::abs(d);
        g.data[p * 3 + c] = sign(d) * norm;
      }
    }
  }
  out.value = sum * norm;
  return out;
}

LossTerm sem_loss(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views) {
  check_batch(renders, views);
  LossTerm out;
  const int K = renders.empty() ? 0 : renders.front()->semantics.channels;
  for (std::size_t j = 0; j < renders.size(); ++j) {
    const RenderOutput& r = *renders[j];
    for (std::size_t p = 0; p < r.mask.pixel_count(); ++p) {
      out.count += (supervised(r, *views[j], p) && views[j]->labels.data[p] < K) ? 1 : 0;
    }
  }
  out.grads.reserve(renders.size());
  for (const RenderOutput* r : renders) out.grads.emplace_back(r->mask.width, r->mask.height, K, 0.0);
  if (out.count == 0) {
    out.empty = true;
    return out;
  }
  const double norm = 1.0 / static_cast<double>(out.count);
  const auto k = static_cast<std::size_t>(K);
  std::vector<double> prob(k);
  double sum = 0.0;
  for (std::size_t j = 0; j < renders.size(); ++j) {
    const RenderOutput& r = *renders[j];
    const TrainingView& v = *views[j];
    ImageD& g = out.grads[j];
    for (std::size_t p = 0; p < r.mask.pixel_count(); ++p) {
      const int label = v.labels.data[p];
      if (!supervised(r, v, p) || label >= K) continue;
      const double* s = r.semantics.data.data() + p * k;
      const double mx = *std::max_element(s, s + K);
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        prob[c] = std::exp(s[c] - mx);
        z += prob[c];
      }
      sum += mx + std::log(z) - s[label];
      for (std::size_t c = 0; c < k; ++c) {
        const double onehot = (static_cast<int>(c) == label) ? 1.0 : 0.0;
        g.data[p * k + c] = (prob[c] / z - onehot) * norm;
      }
    }
  }
  out.value = sum * norm;
  return out;
}

LossTerm depth_loss(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views) {
  check_batch(renders, views);
  LossTerm out;
  out.grads.reserve(renders.size());
  for (const RenderOutput* r : renders) out.grads.emplace_back(r->mask.width, r->mask.height, 1, 0.0);
  struct Hit {
    std::size_t view;
    std::size_t pixel;
    double target;
  };
  std::vector<Hit> hits;
  for (std::size_t j = 0; j < renders.size(); ++j) {
    const RenderOutput& r = *renders[j];
    for (const DepthSample& s : views[j]->sparse_depth) {
      const int col = static_cast<int>(std::floor(s.u));
      const int row = static_cast<int>(std::floor(s.v));
      if (col < 0 || row < 0 || col >= r.mask.width || row >= r.mask.height) continue;
      const std::size_t p = static_cast<std::size_t>(row) * r.mask.width + col;
      if (!r.mask.data[p]) continue;
      hits.push_back({j, p, static_cast<double>(s.depth)});
    }
  }
  out.count = hits.size();
  if (hits.empty()) {
    out.empty = true;
    return out;
  }
  const double norm = 1.0 / static_cast<double>(hits.size());
  double sum = 0.0;
  for (const Hit& h : hits) {
    const double d = renders[h.view]->depth.data[h.pixel] - h.target;
    sum += std::abs(d);
    out.grads[h.view].data[h.pixel] += sign(d) * norm;
  }
  out.value = sum * norm;
  return out;
}

}  // namespace roadmesh
