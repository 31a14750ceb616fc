#pragma once

// Analytic road scenes used as a ground-truth oracle. Views are produced by
// marching camera rays against the analytic height function, independent of
// the mesh rasterizer.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadmesh/dataset_io.hpp"
#include "roadmesh/geometry.hpp"
#include "roadmesh/image.hpp"
#include "roadmesh/mesh.hpp"
#include "roadmesh/metrics.hpp"

namespace roadmesh {

// amplitude * sin(2 pi (kx x + ky y) + phase); k in cycles per meter.
struct Sinusoid {
  double amplitude = 0.0;
  double kx = 0.0;
  double ky = 0.0;
  double phase = 0.0;
};

enum class PathKind { kStraight, kArc };

// Camera mounted on the ego body (x forward, y left, z up).
struct SyntheticCamera {
  std::string id = "front";
  double yaw_deg = 0.0;    // positive turns left
  double pitch_deg = 20.0; // positive looks down
  Vec3 offset = Vec3::Zero();
  double hfov_deg = 90.0;
};

// Road-aligned coordinates: arc length along the path and signed lateral
// offset (positive to the left).
struct PathCoords {
  double along = 0.0;
  double lateral = 0.0;
};

enum SyntheticClass : int { kRoad = 0, kLaneMarking = 1, kCrosswalk = 2, kSidewalk = 3 };

struct SyntheticScene {
  // Elevation: z0 + gx x + gy y + sum of up to three sinusoids.
  double z0 = 0.0;
  double gx = 0.0;
  double gy = 0.0;
  std::vector<Sinusoid> waves;

  PathKind path = PathKind::kStraight;
  double path_length = 80.0;
  double arc_radius = 60.0;  // left turn, center at (0, arc_radius)
  double ego_height = 1.7;
  bool follow_slope = true;  // pitch the ego body with the along-track grade

  std::vector<SyntheticCamera> cameras{SyntheticCamera{}};
  double max_range = 40.0;  // rays beyond this are sky
  std::uint64_t texture_seed = 7;

  // Road layout, meters in the lateral direction.
  double road_halfwidth = 6.0;

  double elevation(double x, double y) const;
  Vec2 elevation_gradient(double x, double y) const;
  // Upper bound of |grad z| over the plane.
  double gradient_bound() const;
  // Bound on |z - z0 - gx x - gy y|.
  double wave_amplitude() const;

  PathCoords path_coords(double x, double y) const;
  Vec2 path_point(double along) const;
  double path_heading(double along) const;

  int class_at(double x, double y) const;
  Vec3 color_at(double x, double y) const;

  SE3Pose ego_pose(double along) const;
  SE3Pose camera_extrinsic(std::size_t camera) const;
  CameraIntrinsics camera_intrinsics(std::size_t camera, int width, int height) const;

  // Throws UsageError on more than three waves, non-positive sizes, or an
  // empty camera list.
  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticScene from_json(const nlohmann::json& j);

  // +-0.3 m rolling surface on a straight 80 m road.
  static SyntheticScene rolling_preset();
  // Straight road climbing 7 m with a gentle cross-slope wave.
  static SyntheticScene steep_preset();
};

// Nearest surface hit along the ray origin + t * dir (dir need not be unit),
// t > 0. Marching steps use the Lipschitz bound of the height function, then
// bisection narrows the crossing to 1e-6 m. Returns false when nothing is hit
// within max_range meters of travel.
bool intersect_surface(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir, double max_range, double& t);

struct SyntheticRender {
  ImageF image;   // RGB in [0,1]; sky color on misses
  ImageU8 labels; // 255 on misses
  ImageD depth;   // camera z; 0 on misses
};

SyntheticRender render_synthetic_view(const SyntheticScene& scene, const SE3Pose& camera_to_world,
                                      const CameraIntrinsics& K);

struct SynthConfig {
  int n_views = 30;
  int width = 256;
  int height = 256;
  std::uint64_t seed = 0;
  int depth_samples_per_view = 0;  // 0 disables sparse depth
  double perturb_rot_deg = 0.0;    // per camera, random axis
  double perturb_trans_m = 0.0;    // per camera, random direction
  double grid_step = 0.5;          // ground-truth elevation grid spacing
};

struct SyntheticBundle {
  DatasetManifest manifest;               // carries the perturbed extrinsics
  std::vector<SE3Pose> true_extrinsics;  // per camera, as rendered
};

// Frame k sits at along = k * path_length / (n_views - 1) and uses camera
// k % cameras. Writes the dataset under out_root plus gt/scene.json,
// gt/extrinsics.json and gt/elevation_grid.{f32,json}.
SyntheticBundle generate_synthetic(const SyntheticScene& scene, const SynthConfig& config,
                                   const std::filesystem::path& out_root);

DatasetManifest synthetic_manifest_skeleton(const SyntheticScene& scene, const SynthConfig& config);

// Regular grid samples of the surface over bounds, one per 1/density meters.
PointCloud export_groundtruth_pointcloud(const SyntheticScene& scene, const Bounds& bounds, double density);

// Analytic references at the pixel centers of a BEV map.
struct BevReference {
  ImageF rgb;
  ImageU8 classes;
  ImageF elevation;
};
BevReference reference_bev(const SyntheticScene& scene, const BevMaps& like);

// Ground-truth pose of extrinsic error: rotation angle (degrees) and
// translation norm of estimate^-1 * truth.
struct PoseError {
  double rot_deg = 0.0;
  double trans_m = 0.0;
};
PoseError pose_error(const SE3Pose& estimate, const SE3Pose& truth);

std::vector<ClassInfo> synthetic_classes();

}  // namespace roadmesh
