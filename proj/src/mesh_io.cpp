#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "roadmesh/error.hpp"
#include "roadmesh/mesh.hpp"

namespace roadmesh {

static_assert(std::endian::native == std::endian::little, "binary writers assume a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError("truncated PLY body: " + path.string());
  return value;
}

void write_ply(const RoadMesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << "ply\nformat binary_little_endian 1.0\ncomment roadmesh export\n"
     << "element vertex " << mesh.vertex_count() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "property uchar class\n"
     << "element face " << mesh.face_count() << "\n"
     << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    put(os, static_cast<float>(mesh.vertex_xy[v].x()));
    put(os, static_cast<float>(mesh.vertex_xy[v].y()));
    put(os, static_cast<float>(mesh.vertex_z[v]));
    for (int c = 0; c < 3; ++c) put(os, to_byte(mesh.vertex_rgb[v * 3 + static_cast<std::size_t>(c)]));
    put(os, static_cast<std::uint8_t>(mesh.vertex_class(v)));
  }
  for (const Face& f : mesh.faces) {
    put(os, static_cast<std::uint8_t>(3));
    for (int idx : f) put(os, static_cast<std::int32_t>(idx));
  }
  if (!os) throw DataError("write failed: " + path.string());
}

void write_obj(const RoadMesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << "# roadmesh export: v x y z r g b\n" << std::setprecision(9);
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    os << "v " << mesh.vertex_xy[v].x() << ' ' << mesh.vertex_xy[v].y() << ' ' << mesh.vertex_z[v];
    for (int c = 0; c < 3; ++c) os << ' ' << mesh.vertex_rgb[v * 3 + static_cast<std::size_t>(c)];
    os << '\n';
  }
  for (const Face& f : mesh.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace

void export_mesh(const RoadMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  if (format == MeshFormat::kPly) {
    write_ply(mesh, path);
  } else {
    write_obj(mesh, path);
  }
}

PlyContents read_ply(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open PLY: " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "ply") throw DataError("not a PLY file: " + path.string());
  std::size_t nv = 0, nf = 0;
  bool binary_le = false;
  while (std::getline(is, line)) {
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (key == "element") {
      std::string name;
      std::size_t n = 0;
      ss >> name >> n;
      if (name == "vertex") nv = n;
      if (name == "face") nf = n;
    }
  }
  if (!binary_le) throw DataError("only binary little-endian PLY is supported: " + path.string());
  PlyContents out;
  out.positions.resize(nv);
  out.colors.resize(nv);
  out.classes.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    for (float& x : out.positions[v]) x = get<float>(is, path);
    for (auto& c : out.colors[v]) c = get<std::uint8_t>(is, path);
    out.classes[v] = get<std::uint8_t>(is, path);
  }
  out.faces.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    if (get<std::uint8_t>(is, path) != 3) throw DataError("non-triangle face in PLY: " + path.string());
    for (int& idx : out.faces[f]) idx = get<std::int32_t>(is, path);
  }
  return out;
}

void write_bev_maps(const BevMaps& maps, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_png(dir / "rgb.png", to_bytes(maps.rgb));
  write_png(dir / "classes.png", maps.classes);
  {
    std::ofstream os(dir / "elevation.f32", std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + (dir / "elevation.f32").string());
    os.write(reinterpret_cast<const char*>(maps.elevation.data.data()),
             static_cast<std::streamsize>(maps.elevation.data.size() * sizeof(float)));
  }
  nlohmann::json meta = {
      {"width", maps.elevation.width},   {"height", maps.elevation.height}, {"dtype", "float32-le"},
      {"units", "meters"},               {"px_per_meter", maps.px_per_meter}, {"origin_x", maps.origin_x},
      {"origin_y", maps.origin_y},       {"nodata", "NaN"},
  };
  std::ofstream js(dir / "elevation.json");
  if (!js) throw DataError("cannot open for writing: " + (dir / "elevation.json").string());
  js << meta.dump(2) << '\n';
}

}  // namespace roadmesh
