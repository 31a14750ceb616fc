#pragma once

// Joint optimization of vertex colors, vertex semantics, the elevation MLP and
// per-camera extrinsic corrections against posed images.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadmesh/dataset_io.hpp"
#include "roadmesh/elevation_field.hpp"
#include "roadmesh/geometry.hpp"
#include "roadmesh/losses.hpp"
#include "roadmesh/mesh.hpp"
#include "roadmesh/optimizer.hpp"
#include "roadmesh/renderer.hpp"

namespace roadmesh {

struct TrainConfig {
  double lr_rgb = 0.1;
  double lr_sem = 0.1;
  double lr_z = 0.001;
  double lr_extrinsic = 0.002;
  double rot_clamp_deg = 0.1;
  double trans_clamp = 0.1;
  int epochs = 7;
  // 1-based epochs on entry to which every learning rate is halved.
  std::vector<int> lr_halving_epochs{2, 4};
  bool use_waypoints = true;
  double waypoint_radius = 25.0;
  double crop_margin = 10.0;
  AdamConfig adam;
  double w_sem = 1.0;
  double w_depth = 1.0;
  bool depth_supervision = false;
  // Views per optimizer step within a sub-area; 0 uses all of them.
  int views_per_step = 0;
  // Passes over each sub-area's views per epoch.
  int passes_per_epoch = 1;
  bool freeze_rgb = false;
  bool freeze_sem = false;
  bool freeze_elevation = false;
  bool freeze_extrinsic = false;
  std::uint64_t seed = 0;
  bool eval_each_epoch = true;

  double lr_scale(int epoch) const;  // epoch is 1-based
  void validate() const;
  nlohmann::json to_json() const;
  // Fields absent from j keep their defaults; unknown keys raise UsageError.
  static TrainConfig from_json(const nlohmann::json& j);
};

// Views plus the per-camera calibration they reference.
struct TrainingSet {
  std::vector<TrainingView> views;
  std::vector<int> camera_of_view;
  std::vector<std::string> camera_ids;
  std::vector<CameraIntrinsics> intrinsics;  // per camera
  std::vector<SE3Pose> extrinsics;           // calibrated camera-to-ego, per camera
  int num_classes = 0;

  static TrainingSet from_dataset(const Dataset& dataset);
  std::vector<Vec2> ego_positions() const;
  std::vector<SE3Pose> ego_poses() const;
  ViewCamera camera(std::size_t view, const std::vector<ExtrinsicCorrection>& corrections) const;
};

struct ModelState {
  RoadMesh mesh;
  ElevationField field;
  std::vector<std::string> camera_ids;
  std::vector<ExtrinsicCorrection> corrections;  // per camera

  // Sets every vertex z from the field.
  void refresh_elevation();
};

struct ModelOptions {
  double spacing = 0.1;
  double footprint_margin = 20.0;
  int num_freqs = 5;
  MlpConfig mlp;
  std::uint64_t seed = 0;
  std::size_t vertex_budget = kDefaultVertexBudget;
};

// Flat gray mesh over the trajectory footprint, flat field, zero corrections.
ModelState initialize_model(const TrainingSet& data, const ModelOptions& options);

struct PretrainOptions {
  double lateral_halfwidth = 6.0;
  double lateral_step = 0.5;
  double ego_height = 1.7;
  int iterations = 2000;
  double lr = 1e-3;
};

// Fits the field to lowered, laterally extended ego positions, then refreshes
// the mesh elevation.
PretrainReport pretrain_elevation(ModelState& model, const TrainingSet& data, const PretrainOptions& options);

struct ViewEvaluation {
  double psnr = 0.0;       // pooled over all supervised pixels
  double psnr_mean = 0.0;  // mean of per-view values (views with no pixels skipped)
  double miou = 0.0;
  double loss_color = 0.0;
  double loss_sem = 0.0;
  double loss_depth = 0.0;
  double loss_total = 0.0;
  std::size_t pixels = 0;
};

// Renders the listed views (all when empty) with the whole mesh and its
// current vertex z. Losses use the global masked-mean convention.
ViewEvaluation evaluate_views(const TrainingSet& data, const ModelState& model, const TrainConfig& config,
                              const std::vector<int>& views = {});

struct EpochRecord {
  int epoch = 0;
  double lr_scale = 1.0;
  double mean_step_loss = 0.0;
  std::size_t steps = 0;
  ViewEvaluation eval;
  double seconds = 0.0;
};

struct TrainReport {
  ViewEvaluation initial;
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  std::size_t empty_loss_warnings = 0;
  double seconds = 0.0;
};

using LogSink = std::function<void(const nlohmann::json&)>;

// Epoch loop: per epoch, sub-areas from the waypoint planner (or one task over
// the whole mesh), views shuffled into steps, one Adam step per parameter
// group per step. On a non-finite loss or gradient throws NumericError and
// leaves model at its last completed step.
TrainReport train(const TrainingSet& data, ModelState& model, const TrainConfig& config, const LogSink& log = {});

}  // namespace roadmesh
