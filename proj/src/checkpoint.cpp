#include "roadmesh/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "roadmesh/error.hpp"

namespace roadmesh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMeshMagic[8] = {'R', 'M', 'M', 'E', 'S', 'H', '0', '1'};

void write_array(std::ofstream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_array(std::ifstream& is, std::vector<double>& v, const fs::path& path) {
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
    throw DataError("truncated mesh state: " + path.string());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

void save_mesh_state(const fs::path& path, const RoadMesh& mesh) {
  const json header = {{"format", "roadmesh.mesh.v1"},
                       {"dtype", "float64-le"},
                       {"bounds", {mesh.bounds.xmin, mesh.bounds.ymin, mesh.bounds.xmax, mesh.bounds.ymax}},
                       {"spacing", mesh.spacing},
                       {"num_classes", mesh.num_classes},
                       {"rows", mesh.rows},
                       {"cols", mesh.cols},
                       {"vertex_count", mesh.vertex_count()},
                       {"face_count", mesh.face_count()},
                       {"arrays", {"z", "rgb", "sem"}}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kMeshMagic, sizeof(kMeshMagic));
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_array(os, mesh.vertex_z);
  write_array(os, mesh.vertex_rgb);
  write_array(os, mesh.vertex_sem);
  if (!os) throw DataError("write failed: " + path.string());
}

RoadMesh load_mesh_state(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open mesh state: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kMeshMagic, 8) != 0) throw DataError("not a mesh state: " + path.string());
  if (!is.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1u << 20)) {
    throw DataError("corrupt mesh header: " + path.string());
  }
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  RoadMesh mesh;
  try {
    const json h = json::parse(text);
    const auto b = h.at("bounds").get<std::vector<double>>();
    mesh = init_grid(Bounds{b.at(0), b.at(1), b.at(2), b.at(3)}, h.at("spacing").get<double>(),
                     h.at("num_classes").get<int>());
    if (h.at("vertex_count").get<std::size_t>() != mesh.vertex_count() ||
        h.at("face_count").get<std::size_t>() != mesh.face_count()) {
      throw DataError("mesh state topology mismatch: " + path.string());
    }
  } catch (const json::exception& e) {
    throw DataError("corrupt mesh header in " + path.string() + ": " + e.what());
  }
  read_array(is, mesh.vertex_z, path);
  read_array(is, mesh.vertex_rgb, path);
  read_array(is, mesh.vertex_sem, path);
  return mesh;
}

void save_checkpoint(const fs::path& dir, const ModelState& model, const json& config) {
  fs::create_directories(dir);
  save_mesh_state(dir / "mesh.bin", model.mesh);
  model.field.save(dir / "field.bin");
  json corr = json::array();
  for (std::size_t c = 0; c < model.corrections.size(); ++c) {
    const ExtrinsicCorrection& e = model.corrections[c];
    corr.push_back({{"camera_id", model.camera_ids.at(c)},
                    {"phi", {e.phi.x(), e.phi.y(), e.phi.z()}},
                    {"delta_t", {e.delta_t.x(), e.delta_t.y(), e.delta_t.z()}},
                    {"rot_clamp_deg", e.rot_clamp_deg},
                    {"trans_clamp", e.trans_clamp}});
  }
  write_json_file(dir / "corrections.json", corr);
  write_json_file(dir / "config.json", config);
}

ModelState load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
  RoadMesh mesh = load_mesh_state(dir / "mesh.bin");
  ElevationField field = ElevationField::load(dir / "field.bin");
  ModelState state{std::move(mesh), std::move(field), {}, {}};
  const json corr = read_json_file(dir / "corrections.json");
  try {
    for (const json& c : corr) {
      ExtrinsicCorrection e;
      const auto phi = c.at("phi").get<std::vector<double>>();
      const auto dt = c.at("delta_t").get<std::vector<double>>();
      e.phi = Vec3(phi.at(0), phi.at(1), phi.at(2));
      e.delta_t = Vec3(dt.at(0), dt.at(1), dt.at(2));
      e.rot_clamp_deg = c.at("rot_clamp_deg").get<double>();
      e.trans_clamp = c.at("trans_clamp").get<double>();
      state.camera_ids.push_back(c.at("camera_id").get<std::string>());
      state.corrections.push_back(e);
    }
  } catch (const std::exception& e) {
    throw DataError((dir / "corrections.json").string() + ": " + e.what());
  }
  return state;
}

json load_checkpoint_config(const fs::path& dir) { return read_json_file(dir / "config.json"); }

}  // namespace roadmesh
