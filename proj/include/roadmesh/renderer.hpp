#pragma once

// Hard z-buffered perspective rasterization of a triangle mesh with
// per-vertex color and semantic logits, and its reverse-mode derivative.
//
// Barycentrics are evaluated in camera space: for a pixel ray r and
// camera-frame vertices P0..P2,
//   c_k = r . (P_{k+1} x P_{k+2}),  b_k = c_k / sum(c),  depth = det[P] / sum(c),
// which is the perspective-correct interpolation. Face selection (which face
// wins the z-buffer) is treated as piecewise constant.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "roadmesh/geometry.hpp"
#include "roadmesh/image.hpp"
#include "roadmesh/mesh.hpp"

namespace roadmesh {

struct RenderGeometry {
  std::span<const Vec3> positions;  // world frame
  std::span<const Face> faces;
  std::span<const double> rgb;  // 3 per vertex
  std::span<const double> sem;  // num_classes per vertex
  int num_classes = 0;
};

struct FragmentBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> face;               // -1 where uncovered
  std::vector<std::array<double, 3>> bary;      // perspective-correct
  std::vector<double> depth;                    // camera z, meters

  std::size_t size() const { return face.size(); }
};

struct RenderOutput {
  ImageD color;      // 3 channels
  ImageD semantics;  // num_classes channels (logits)
  ImageD depth;      // meters, 0 where uncovered
  ImageU8 mask;      // 1 where covered
};

struct RasterResult {
  RenderOutput output;
  FragmentBuffer fragments;
};

inline constexpr int kTileSize = 32;

// camera_to_world pose, x-right / y-down / z-forward camera frame. Faces with
// any vertex at depth <= kNearPlane, or facing away from the camera, are
// culled. Ties at equal depth go to the lower face index.
RasterResult rasterize(const SE3Pose& camera_to_world, const CameraIntrinsics& K, const RenderGeometry& geometry);

// The parameters that produce one view's camera pose.
struct ViewCamera {
  SE3Pose ego;
  SE3Pose extrinsic;
  ExtrinsicCorrection correction;
  CameraIntrinsics intrinsics;

  SE3Pose camera_to_world() const { return compose_camera_pose(ego, extrinsic, correction); }
};

struct RenderGradients {
  std::vector<double> rgb;  // 3 per vertex
  std::vector<double> sem;  // num_classes per vertex
  std::vector<double> z;    // per vertex
  Vec3 phi = Vec3::Zero();
  Vec3 delta_t = Vec3::Zero();
};

struct BackwardOptions {
  bool attributes = true;  // rgb / sem gradients
  bool geometry = true;    // z / extrinsic gradients
};

// Any of grad_color / grad_sem / grad_depth may be null (treated as zero).
// Shapes must match the forward outputs.
RenderGradients rasterize_backward(const FragmentBuffer& fragments, const ImageD* grad_color, const ImageD* grad_sem,
                                   const ImageD* grad_depth, const ViewCamera& camera,
                                   const RenderGeometry& geometry, const BackwardOptions& options = {});

// One world point per covered pixel center at its rendered depth.
std::vector<Vec3> unproject_depth(const ImageD& depth, const ImageU8& mask, const SE3Pose& camera_to_world,
                                  const CameraIntrinsics& K);

}  // namespace roadmesh
