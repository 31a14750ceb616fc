#pragma once

// Bird's-eye-view road mesh: an equilateral triangle tiling of the ground
// plane whose vertices carry a fixed (x, y), a field-derived z, a learnable
// RGB color and K learnable semantic logits.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "roadmesh/geometry.hpp"
#include "roadmesh/image.hpp"

namespace roadmesh {

struct Bounds {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(const Vec2& p) const {
    return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
  }
};

using Face = std::array<int, 3>;

inline constexpr std::size_t kDefaultVertexBudget = 20'000'000;
inline constexpr int kDefaultNumClasses = 7;

struct RoadMesh {
  std::vector<Vec2> vertex_xy;
  std::vector<double> vertex_z;    // V
  std::vector<double> vertex_rgb;  // 3V, row per vertex
  std::vector<double> vertex_sem;  // KV, row per vertex
  std::vector<Face> faces;
  double spacing = 0.0;
  int num_classes = 0;
  Bounds bounds;
  int rows = 0;
  int cols = 0;

  std::size_t vertex_count() const { return vertex_xy.size(); }
  std::size_t face_count() const { return faces.size(); }

  Vec3 position(std::size_t v) const { return {vertex_xy[v].x(), vertex_xy[v].y(), vertex_z[v]}; }
  // argmax of the logits; lowest class id wins ties.
  int vertex_class(std::size_t v) const;

  void clamp_colors();
};

// Offset-row tiling: row r at y = ymin + r * spacing * sqrt(3)/2, odd rows
// shifted by spacing/2. Every row holds floor(width/spacing)+1 vertices.
RoadMesh init_grid(const Bounds& bounds, double spacing, int num_classes,
                   std::size_t vertex_budget = kDefaultVertexBudget);

Bounds footprint_from_trajectory(std::span<const Vec2> ego_positions, double margin = 20.0);

// Indices into a parent mesh. local faces reference positions in
// vertex_indices.
struct SubMesh {
  std::vector<int> vertex_indices;  // sorted, parent ids
  std::vector<int> face_indices;    // sorted, parent ids
  std::vector<Face> local_faces;
  Vec2 center = Vec2::Zero();
  double radius = 0.0;

  bool empty() const { return face_indices.empty(); }
  std::size_t vertex_count() const { return vertex_indices.size(); }

  // Copies rows of a parent per-vertex array (width values per vertex).
  std::vector<double> gather(std::span<const double> parent, int width) const;
  // Adds local rows into the parent array.
  void scatter_add(std::span<const double> local, std::span<double> parent, int width) const;
  // Overwrites the parent rows with the local rows.
  void scatter_assign(std::span<const double> local, std::span<double> parent, int width) const;
};

// Faces with at least one vertex within radius of center, plus their vertices.
SubMesh crop_subarea(const RoadMesh& mesh, const Vec2& center, double radius);
// Every face and vertex of the mesh.
SubMesh whole_mesh(const RoadMesh& mesh);

enum class MeshFormat { kPly, kObj };

void export_mesh(const RoadMesh& mesh, const std::filesystem::path& path, MeshFormat format);

// Parsed back from our own PLY writer. Colors are bytes, z/xy float32.
struct PlyContents {
  std::vector<std::array<float, 3>> positions;
  std::vector<std::array<std::uint8_t, 3>> colors;
  std::vector<std::uint8_t> classes;
  std::vector<Face> faces;
};
PlyContents read_ply(const std::filesystem::path& path);

inline constexpr std::uint8_t kBevClassSentinel = 255;

struct BevMaps {
  ImageF rgb;         // 3 channels, 0 outside the mesh
  ImageU8 classes;    // kBevClassSentinel outside the mesh
  ImageF elevation;   // meters, NaN outside the mesh
  ImageU8 coverage;   // 1 where a face covers the pixel center
  double px_per_meter = 10.0;
  double origin_x = 0.0;  // world x of the left image edge
  double origin_y = 0.0;  // world y of the top image edge

  // World (x, y) of a pixel center. Rows run toward -y (north up).
  Vec2 pixel_center(int row, int col) const {
    return {origin_x + (col + 0.5) / px_per_meter, origin_y - (row + 0.5) / px_per_meter};
  }
};

// Orthographic top-down rasterization with barycentric interpolation.
BevMaps render_bev_maps(const RoadMesh& mesh, double px_per_meter);

// rgb.png, classes.png, elevation.f32 and elevation.json in dir.
void write_bev_maps(const BevMaps& maps, const std::filesystem::path& dir);

}  // namespace roadmesh
