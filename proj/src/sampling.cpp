#include "roadmesh/sampling.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "roadmesh/error.hpp"

namespace roadmesh {

FpsResult farthest_point_sample(std::span<const Vec2> positions, double R, std::uint64_t seed) {
  if (positions.empty()) throw UsageError("farthest_point_sample: no positions");
  if (!(R > 0.0)) throw UsageError("farthest_point_sample: radius must be positive");
  std::mt19937_64 rng(seed);
  const std::size_t n = positions.size();
  FpsResult out;
  std::size_t pick = static_cast<std::size_t>(rng() % n);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (true) {
    out.indices.push_back(static_cast<int>(pick));
    out.waypoints.push_back(positions[pick]);
    double far_d = -1.0;
    std::size_t far_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (positions[i] - positions[pick]).norm());
      if (nearest[i] > far_d) {
        far_d = nearest[i];
        far_i = i;
      }
    }
    out.farthest_distance.push_back(far_d);
    if (far_d <= R) break;
    pick = far_i;
  }
  return out;
}

std::vector<std::vector<int>> gather_views(std::span<const Vec2> waypoints, std::span<const Vec2> camera_positions,
                                           double R) {
  std::vector<std::vector<int>> lists(waypoints.size());
  for (std::size_t j = 0; j < waypoints.size(); ++j) {
    for (std::size_t i = 0; i < camera_positions.size(); ++i) {
      if ((camera_positions[i] - waypoints[j]).norm() <= R) lists[j].push_back(static_cast<int>(i));
    }
  }
  return lists;
}

nlohmann::json WaypointPlan::to_json() const {
  nlohmann::json j;
  j["radius"] = radius;
  j["seed"] = seed;
  j["waypoints"] = nlohmann::json::array();
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    j["waypoints"].push_back({{"x", waypoints[i].x()}, {"y", waypoints[i].y()}, {"views", views[i]}});
  }
  return j;
}

WaypointPlanner::WaypointPlanner(std::vector<Vec2> camera_positions, double radius, std::uint64_t base_seed,
                                 double crop_margin)
    : positions_(std::move(camera_positions)), radius_(radius), base_seed_(base_seed), crop_margin_(crop_margin) {
  if (positions_.empty()) throw UsageError("WaypointPlanner: no camera positions");
  if (!(radius_ > 0.0)) throw UsageError("WaypointPlanner: radius must be positive");
  if (!(crop_margin_ >= 0.0)) throw UsageError("WaypointPlanner: crop margin must be non-negative");
}

WaypointPlan WaypointPlanner::plan(int epoch) const {
  WaypointPlan p;
  p.seed = base_seed_ + static_cast<std::uint64_t>(epoch);
  p.radius = radius_;
  p.waypoints = farthest_point_sample(positions_, radius_, p.seed).waypoints;
  p.views = gather_views(p.waypoints, positions_, radius_);
  return p;
}

std::vector<SubAreaTask> WaypointPlanner::epoch_schedule(int epoch) const {
  const WaypointPlan p = plan(epoch);
  std::vector<SubAreaTask> tasks;
  tasks.reserve(p.waypoints.size());
  for (std::size_t j = 0; j < p.waypoints.size(); ++j) {
    tasks.push_back({p.waypoints[j], radius_ + crop_margin_, p.views[j]});
  }
  return tasks;
}

}  // namespace roadmesh
