#pragma once

// Supervision terms over a batch of rendered views. Color and semantic terms
// are global masked means: the normalizer is the masked-pixel count over the
// whole batch, where a pixel counts when the render covers it and the view's
// static-class supervision mask allows it.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "roadmesh/geometry.hpp"
#include "roadmesh/image.hpp"
#include "roadmesh/renderer.hpp"

namespace roadmesh {

struct DepthSample {
  float u = 0.0f;  // pixels
  float v = 0.0f;
  float depth = 0.0f;  // meters, camera z
};

struct TrainingView {
  ImageF image;             // 3 channels in [0,1]
  ImageU8 labels;           // class ids, 255 = ignore
  ImageU8 supervision_mask; // 0 on dynamic classes and ignore pixels
  SE3Pose ego_pose;
  std::string camera_id;
  std::vector<DepthSample> sparse_depth;
};

struct LossTerm {
  double value = 0.0;
  std::vector<ImageD> grads;  // per render, d value / d image
  std::size_t count = 0;      // contributing pixels (or depth samples)
  bool empty = false;         // nothing contributed; value defined as 0
};

// sum m |C - Cbar|_1 / (3 sum m)
LossTerm color_loss(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views);

// Masked mean softmax cross-entropy; labels >= K are ignored.
LossTerm sem_loss(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views);

// Mean absolute error over sparse samples that land on covered pixels.
LossTerm depth_loss(std::span<const RenderOutput* const> renders, std::span<const TrainingView* const> views);

}  // namespace roadmesh
