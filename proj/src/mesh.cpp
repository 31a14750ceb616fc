#include "roadmesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "roadmesh/error.hpp"

namespace roadmesh {

int RoadMesh::vertex_class(std::size_t v) const {
  const double* s = vertex_sem.data() + v * static_cast<std::size_t>(num_classes);
  return static_cast<int>(std::max_element(s, s + num_classes) - s);
}

void RoadMesh::clamp_colors() {
  for (double& c : vertex_rgb) c = std::clamp(c, 0.0, 1.0);
}

RoadMesh init_grid(const Bounds& bounds, double spacing, int num_classes, std::size_t vertex_budget) {
  if (!(spacing > 0.0)) throw UsageError("mesh spacing must be positive");
  if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0)) throw UsageError("mesh bounds are degenerate");
  if (num_classes <= 0) throw UsageError("class count must be positive");

  const double pitch = spacing * std::sqrt(3.0) / 2.0;
  // Tolerance keeps exact multiples (1.0 / 0.1) from losing a row to rounding.
  const double rows_f = std::floor(bounds.height() / pitch + 1e-9) + 1.0;
  const double cols_f = std::floor(bounds.width() / spacing + 1e-9) + 1.0;
  if (rows_f < 2.0 || cols_f < 2.0) throw UsageError("mesh bounds smaller than one triangle");
  if (rows_f * cols_f > static_cast<double>(vertex_budget)) {
    std::ostringstream msg;
    msg << "mesh of " << static_cast<long long>(rows_f) << "x" << static_cast<long long>(cols_f)
        << " vertices exceeds the vertex budget of " << vertex_budget << " (increase spacing or shrink bounds)";
    throw UsageError(msg.str());
  }

  RoadMesh mesh;
  mesh.rows = static_cast<int>(rows_f);
  mesh.cols = static_cast<int>(cols_f);
  mesh.spacing = spacing;
  mesh.num_classes = num_classes;
  mesh.bounds = bounds;

  const std::size_t nv = static_cast<std::size_t>(mesh.rows) * mesh.cols;
  mesh.vertex_xy.reserve(nv);
  for (int r = 0; r < mesh.rows; ++r) {
    const double y = bounds.ymin + r * pitch;
    const double shift = (r % 2 == 1) ? 0.5 * spacing : 0.0;
    for (int c = 0; c < mesh.cols; ++c) mesh.vertex_xy.emplace_back(bounds.xmin + c * spacing + shift, y);
  }
  mesh.vertex_z.assign(nv, 0.0);
  mesh.vertex_rgb.assign(nv * 3, 0.5);
  mesh.vertex_sem.assign(nv * static_cast<std::size_t>(num_classes), 0.0);

  const auto id = [&](int r, int c) { return r * mesh.cols + c; };
  mesh.faces.reserve(static_cast<std::size_t>(mesh.rows - 1) * (mesh.cols - 1) * 2);
  // All faces are counter-clockwise seen from +z.
  for (int r = 0; r + 1 < mesh.rows; ++r) {
    for (int c = 0; c + 1 < mesh.cols; ++c) {
      if (r % 2 == 0) {
        mesh.faces.push_back({id(r, c), id(r, c + 1), id(r + 1, c)});
        mesh.faces.push_back({id(r, c + 1), id(r + 1, c + 1), id(r + 1, c)});
      } else {
        mesh.faces.push_back({id(r, c), id(r + 1, c + 1), id(r + 1, c)});
        mesh.faces.push_back({id(r, c), id(r, c + 1), id(r + 1, c + 1)});
      }
    }
  }
  return mesh;
}

Bounds footprint_from_trajectory(std::span<const Vec2> ego_positions, double margin) {
  if (ego_positions.empty()) throw UsageError("footprint_from_trajectory: empty trajectory");
  Bounds b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec2& p : ego_positions) {
    b.xmin = std::min(b.xmin, p.x());
    b.ymin = std::min(b.ymin, p.y());
    b.xmax = std::max(b.xmax, p.x());
    b.ymax = std::max(b.ymax, p.y());
  }
  b.xmin -= margin;
  b.ymin -= margin;
  b.xmax += margin;
  b.ymax += margin;
  return b;
}

std::vector<double> SubMesh::gather(std::span<const double> parent, int width) const {
  const auto w = static_cast<std::size_t>(width);
  std::vector<double> out(vertex_indices.size() * w);
  for (std::size_t i = 0; i < vertex_indices.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(vertex_indices[i]) * w;
    std::copy_n(parent.begin() + static_cast<std::ptrdiff_t>(src), w, out.begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  return out;
}

void SubMesh::scatter_add(std::span<const double> local, std::span<double> parent, int width) const {
  const auto w = static_cast<std::size_t>(width);
  for (std::size_t i = 0; i < vertex_indices.size(); ++i) {
    const std::size_t dst = static_cast<std::size_t>(vertex_indices[i]) * w;
    for (std::size_t k = 0; k < w; ++k) parent[dst + k] += local[i * w + k];
  }
}

void SubMesh::scatter_assign(std::span<const double> local, std::span<double> parent, int width) const {
  const auto w = static_cast<std::size_t>(width);
  for (std::size_t i = 0; i < vertex_indices.size(); ++i) {
    const std::size_t dst = static_cast<std::size_t>(vertex_indices[i]) * w;
    for (std::size_t k = 0; k < w; ++k) parent[dst + k] = local[i * w + k];
  }
}

namespace {

SubMesh build_submesh(const RoadMesh& mesh, std::vector<int> faces, const Vec2& center, double radius) {
  SubMesh sub;
  sub.center = center;
  sub.radius = radius;
  sub.face_indices = std::move(faces);
  std::vector<int> local(mesh.vertex_count(), -1);
  std::vector<char> used(mesh.vertex_count(), 0);
  for (int f : sub.face_indices) {
    for (int v : mesh.faces[static_cast<std::size_t>(f)]) used[static_cast<std::size_t>(v)] = 1;
  }
  for (std::size_t v = 0; v < used.size(); ++v) {
    if (used[v]) {
      local[v] = static_cast<int>(sub.vertex_indices.size());
      sub.vertex_indices.push_back(static_cast<int>(v));
    }
  }
  sub.local_faces.reserve(sub.face_indices.size());
  for (int f : sub.face_indices) {
    const Face& pf = mesh.faces[static_cast<std::size_t>(f)];
    sub.local_faces.push_back({local[static_cast<std::size_t>(pf[0])], local[static_cast<std::size_t>(pf[1])],
                               local[static_cast<std::size_t>(pf[2])]});
  }
  return sub;
}

}  // namespace

SubMesh crop_subarea(const RoadMesh& mesh, const Vec2& center, double radius) {
  if (!(radius > 0.0)) throw UsageError("crop radius must be positive");
  const double r2 = radius * radius;
  std::vector<char> inside(mesh.vertex_count(), 0);
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    inside[v] = (mesh.vertex_xy[v] - center).squaredNorm() <= r2 ? 1 : 0;
  }
  std::vector<int> faces;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const Face& fc = mesh.faces[f];
    if (inside[static_cast<std::size_t>(fc[0])] || inside[static_cast<std::size_t>(fc[1])] ||
        inside[static_cast<std::size_t>(fc[2])]) {
      faces.push_back(static_cast<int>(f));
    }
  }
  return build_submesh(mesh, std::move(faces), center, radius);
}

SubMesh whole_mesh(const RoadMesh& mesh) {
  std::vector<int> faces(mesh.face_count());
  for (std::size_t f = 0; f < faces.size(); ++f) faces[f] = static_cast<int>(f);
  const Vec2 c(0.5 * (mesh.bounds.xmin + mesh.bounds.xmax), 0.5 * (mesh.bounds.ymin + mesh.bounds.ymax));
  return build_submesh(mesh, std::move(faces), c, std::numeric_limits<double>::infinity());
}

BevMaps render_bev_maps(const RoadMesh& mesh, double px_per_meter) {
  if (!(px_per_meter > 0.0)) throw UsageError("BEV resolution must be positive");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Vec2& p : mesh.vertex_xy) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  BevMaps maps;
  maps.px_per_meter = px_per_meter;
  maps.origin_x = xmin;
  maps.origin_y = ymax;
  const int w = std::max(1, static_cast<int>(std::ceil((xmax - xmin) * px_per_meter - 1e-9)));
  const int h = std::max(1, static_cast<int>(std::ceil((ymax - ymin) * px_per_meter - 1e-9)));
  maps.rgb = ImageF(w, h, 3, 0.0f);
  maps.classes = ImageU8(w, h, 1, kBevClassSentinel);
  maps.elevation = ImageF(w, h, 1, std::numeric_limits<float>::quiet_NaN());
  maps.coverage = ImageU8(w, h, 1, 0);

  const int K = mesh.num_classes;
  std::vector<double> logits(static_cast<std::size_t>(K));
  for (const Face& f : mesh.faces) {
    const Vec2& a = mesh.vertex_xy[static_cast<std::size_t>(f[0])];
    const Vec2& b = mesh.vertex_xy[static_cast<std::size_t>(f[1])];
    const Vec2& c = mesh.vertex_xy[static_cast<std::size_t>(f[2])];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area == 0.0) continue;
    const double fxmin = std::min({a.x(), b.x(), c.x()}), fxmax = std::max({a.x(), b.x(), c.x()});
    const double fymin = std::min({a.y(), b.y(), c.y()}), fymax = std::max({a.y(), b.y(), c.y()});
    const int c0 = std::max(0, static_cast<int>(std::floor((fxmin - xmin) * px_per_meter - 0.5)));
    const int c1 = std::min(w - 1, static_cast<int>(std::ceil((fxmax - xmin) * px_per_meter - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::floor((ymax - fymax) * px_per_meter - 0.5)));
    const int r1 = std::min(h - 1, static_cast<int>(std::ceil((ymax - fymin) * px_per_meter - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        if (maps.coverage.at(r, col)) continue;  // lower face index keeps shared-edge pixels
        const Vec2 p = maps.pixel_center(r, col);
        const double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
        const double wt[3] = {w0, w1, w2};
        maps.coverage.at(r, col) = 1;
        double z = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          double v = 0.0;
          for (int k = 0; k < 3; ++k) v += wt[k] * mesh.vertex_rgb[static_cast<std::size_t>(f[static_cast<std::size_t>(k)]) * 3 + ch];
          maps.rgb.at(r, col, ch) = static_cast<float>(v);
        }
        std::fill(logits.begin(), logits.end(), 0.0);
        for (int k = 0; k < 3; ++k) {
          const auto v = static_cast<std::size_t>(f[static_cast<std::size_t>(k)]);
          z += wt[k] * mesh.vertex_z[v];
          for (int s = 0; s < K; ++s) logits[static_cast<std::size_t>(s)] += wt[k] * mesh.vertex_sem[v * static_cast<std::size_t>(K) + s];
        }
        maps.elevation.at(r, col) = static_cast<float>(z);
        maps.classes.at(r, col) =
            static_cast<std::uint8_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      }
    }
  }
  return maps;
}

}  // namespace roadmesh
