#include "roadmesh/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "roadmesh/error.hpp"
#include "roadmesh/metrics.hpp"
#include "roadmesh/parallel.hpp"
#include "roadmesh/renderer.hpp"

namespace roadmesh {

namespace fs = std::filesystem;
using nlohmann::json;

json EvalReport::to_json() const {
  return {{"psnr", metric_value(views.psnr)},
          {"psnr_mean_per_view", metric_value(views.psnr_mean)},
          {"miou", metric_value(views.miou)},
          {"cd", metric_value(cd)},
          {"rmse", metric_value(rmse)},
          {"loss_total", views.loss_total},
          {"counts",
           {{"pixels", views.pixels}, {"pred_points", pred_points}, {"gt_points", gt_points}, {"depth_pixels", depth_pixels}}}};
}

std::optional<SyntheticScene> load_groundtruth_scene(const fs::path& root) {
  const fs::path p = root / "gt" / "scene.json";
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  try {
    return SyntheticScene::from_json(json::parse(in));
  } catch (const std::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

std::vector<SE3Pose> load_true_extrinsics(const fs::path& root, const DatasetManifest& manifest) {
  std::vector<SE3Pose> out;
  for (const CameraInfo& c : manifest.cameras) out.push_back(c.extrinsic);
  const fs::path p = root / "gt" / "extrinsics.json";
  if (!fs::exists(p)) return out;
  std::ifstream in(p);
  try {
    const json j = json::parse(in);
    for (std::size_t c = 0; c < manifest.cameras.size(); ++c) {
      if (j.contains(manifest.cameras[c].id)) out[c] = pose_from_json(j.at(manifest.cameras[c].id).at("true"));
    }
  } catch (const std::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
  return out;
}

EvalReport evaluate_model(const Dataset& dataset, const TrainingSet& data, const ModelState& model,
                          const TrainConfig& train, const EvalOptions& options) {
  EvalReport report;
  report.views = evaluate_views(data, model, train);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.cd = nan;
  report.rmse = nan;

  const RoadMesh& mesh = model.mesh;
  std::vector<Vec3> positions(mesh.vertex_count());
  for (std::size_t v = 0; v < positions.size(); ++v) positions[v] = mesh.position(v);
  const RenderGeometry geom{positions, mesh.faces, mesh.vertex_rgb, mesh.vertex_sem, mesh.num_classes};
  const std::optional<SyntheticScene> scene = load_groundtruth_scene(dataset.root());
  const std::vector<SE3Pose> truth = load_true_extrinsics(dataset.root(), dataset.manifest());
  const std::vector<int> flat = dataset.manifest().flat_classes();
  std::vector<bool> is_flat(256, false);
  for (int c : flat) is_flat[static_cast<std::size_t>(c)] = true;

  const std::size_t n = data.views.size();
  std::vector<std::vector<Vec3>> clouds(n);
  std::vector<std::vector<Vec3>> gt_clouds(n);
  std::vector<double> sse(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const ViewCamera cam = data.camera(i, model.corrections);
    const SE3Pose pose = cam.camera_to_world();
    const RasterResult rr = rasterize(pose, cam.intrinsics, geom);
    const RenderOutput& out = rr.output;
    // Keep pixels whose rendered class is expected to be flat.
    ImageU8 keep = out.mask;
    const int K = mesh.num_classes;
    for (std::size_t p = 0; p < keep.pixel_count(); ++p) {
      if (!keep.data[p]) continue;
      const double* s = out.semantics.data.data() + p * static_cast<std::size_t>(K);
      keep.data[p] = is_flat[static_cast<std::size_t>(std::max_element(s, s + K) - s)] ? 1 : 0;
    }
    clouds[i] = unproject_depth(out.depth, keep, pose, cam.intrinsics);
    if (scene) {
      const auto c = static_cast<std::size_t>(data.camera_of_view[i]);
      const SE3Pose true_pose = data.views[i].ego_pose * truth[c];
      const SyntheticRender ref = render_synthetic_view(*scene, true_pose, cam.intrinsics);
      ImageU8 seen(ref.depth.width, ref.depth.height, 1);
      for (std::size_t p = 0; p < seen.pixel_count(); ++p) {
        seen.data[p] = (ref.depth.data[p] > 0.0 && is_flat[ref.labels.data[p]]) ? 1 : 0;
      }
      gt_clouds[i] = unproject_depth(ref.depth, seen, true_pose, cam.intrinsics);
      for (std::size_t p = 0; p < out.mask.pixel_count(); ++p) {
        if (!out.mask.data[p] || !(ref.depth.data[p] > 0.0)) continue;
        const double d = out.depth.data[p] - ref.depth.data[p];
        sse[i] += d * d;
        ++count[i];
      }
    } else {
      for (const DepthSample& s : data.views[i].sparse_depth) {
        const int col = static_cast<int>(std::floor(s.u));
        const int row = static_cast<int>(std::floor(s.v));
        if (col < 0 || row < 0 || col >= out.mask.width || row >= out.mask.height || !out.mask.at(row, col)) continue;
        const double d = out.depth.at(row, col) - s.depth;
        sse[i] += d * d;
        ++count[i];
      }
    }
  });
  double total_sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total_sse += sse[i];
    report.depth_pixels += count[i];
  }
  if (report.depth_pixels > 0) report.rmse = std::sqrt(total_sse / static_cast<double>(report.depth_pixels));

  PointCloud pred;
  PointCloud gt;
  for (const auto& c : clouds) pred.points.insert(pred.points.end(), c.begin(), c.end());
  for (const auto& c : gt_clouds) gt.points.insert(gt.points.end(), c.begin(), c.end());
  report.pred_points = pred.size();
  report.gt_points = gt.size();
  if (!pred.empty() && !gt.empty()) report.cd = chamfer(pred, gt, options.keep_fraction);
  return report;
}

}  // namespace roadmesh
