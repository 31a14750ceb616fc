#pragma once

// Divide-and-conquer scheduling over the camera trajectory: farthest point
// sampling picks waypoints until every camera position is within R of one,
// and each waypoint supervises the views within R of it.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "roadmesh/geometry.hpp"

namespace roadmesh {

struct FpsResult {
  std::vector<int> indices;              // into the input positions, in selection order
  std::vector<Vec2> waypoints;
  std::vector<double> farthest_distance;  // farthest remaining distance after each pick
};

// First pick is uniform over positions (seeded); then greedily the position
// farthest from the chosen set, stopping once that distance is <= R.
FpsResult farthest_point_sample(std::span<const Vec2> positions, double R, std::uint64_t seed);

// view i is in list j iff |position_i - waypoint_j| <= R (closed ball).
std::vector<std::vector<int>> gather_views(std::span<const Vec2> waypoints, std::span<const Vec2> camera_positions,
                                           double R);

struct WaypointPlan {
  std::vector<Vec2> waypoints;
  double radius = 25.0;
  std::vector<std::vector<int>> views;  // per waypoint
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct SubAreaTask {
  Vec2 center = Vec2::Zero();
  double crop_radius = 0.0;
  std::vector<int> views;
};

class WaypointPlanner {
 public:
  WaypointPlanner(std::vector<Vec2> camera_positions, double radius = 25.0, std::uint64_t base_seed = 0,
                  double crop_margin = 10.0);

  // Waypoints reseeded with base_seed + epoch.
  WaypointPlan plan(int epoch) const;
  // Sub-areas in selection order; crop radius R + margin.
  std::vector<SubAreaTask> epoch_schedule(int epoch) const;

  double radius() const { return radius_; }
  double crop_margin() const { return crop_margin_; }

 private:
  std::vector<Vec2> positions_;
  double radius_;
  std::uint64_t base_seed_;
  double crop_margin_;
};

}  // namespace roadmesh
