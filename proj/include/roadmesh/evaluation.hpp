#pragma once

// Dataset-level evaluation of a trained model: image metrics over all views,
// plus chamfer distance and depth RMSE against synthetic ground truth when the
// dataset carries it (gt/scene.json, gt/extrinsics.json). The reference cloud
// is the ray-cast surface seen by the same views under the true extrinsics,
// restricted to flat classes; predicted points are unprojected rendered depth
// restricted to pixels whose rendered class is flat.

#include <optional>

#include <json.hpp>

#include "roadmesh/dataset_io.hpp"
#include "roadmesh/run_config.hpp"
#include "roadmesh/synthetic.hpp"
#include "roadmesh/trainer.hpp"

namespace roadmesh {

struct EvalReport {
  ViewEvaluation views;
  double cd = 0.0;    // meters^2, NaN without a reference cloud
  double rmse = 0.0;  // meters, NaN without reference depth
  std::size_t pred_points = 0;
  std::size_t gt_points = 0;
  std::size_t depth_pixels = 0;

  nlohmann::json to_json() const;
};

// Scene and true extrinsics from root/gt when present.
std::optional<SyntheticScene> load_groundtruth_scene(const std::filesystem::path& root);
std::vector<SE3Pose> load_true_extrinsics(const std::filesystem::path& root, const DatasetManifest& manifest);

EvalReport evaluate_model(const Dataset& dataset, const TrainingSet& data, const ModelState& model,
                          const TrainConfig& train, const EvalOptions& options);

}  // namespace roadmesh
