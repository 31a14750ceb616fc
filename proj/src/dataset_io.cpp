#include "roadmesh/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "roadmesh/error.hpp"
#include "roadmesh/image.hpp"
#include "roadmesh/metrics.hpp"
#include "roadmesh/parallel.hpp"

namespace roadmesh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPoseTolerance = 1e-6;

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DataError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": bad value for '" + key + "': " + e.what());
  }
}

void check_pose(const SE3Pose& p, const std::string& where) {
  if (!p.rotation.allFinite() || !p.translation.allFinite()) throw DataError(where + ": non-finite pose");
  if (p.orthonormality_error() > kPoseTolerance || std::abs(p.rotation.determinant() - 1.0) > kPoseTolerance) {
    throw DataError(where + ": pose rotation is not a proper rotation");
  }
}

}  // namespace

nlohmann::json pose_to_json(const SE3Pose& pose) {
  const auto rm = pose.row_major();
  return json(std::vector<double>(rm.begin(), rm.end()));
}

SE3Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 16) throw DataError("pose must be an array of 16 numbers");
  std::array<double, 16> v{};
  for (std::size_t i = 0; i < 16; ++i) {
    if (!j[i].is_number()) throw DataError("pose must be an array of 16 numbers");
    v[i] = j[i].get<double>();
  }
  const double tail = std::abs(v[12]) + std::abs(v[13]) + std::abs(v[14]) + std::abs(v[15] - 1.0);
  if (tail > 1e-12) throw DataError("pose last row must be 0 0 0 1");
  return SE3Pose::from_row_major(v);
}

int DatasetManifest::camera_index(const std::string& id) const {
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].id == id) return static_cast<int>(i);
  }
  throw DataError("unknown camera '" + id + "'");
}

std::vector<int> DatasetManifest::flat_classes() const {
  std::vector<int> out;
  for (const ClassInfo& c : classes) {
    if (c.flat && !c.dynamic) out.push_back(c.id);
  }
  return out;
}

json DatasetManifest::to_json() const {
  json j;
  j["schema"] = kManifestSchema;
  j["scene_id"] = scene_id;
  j["cameras"] = json::array();
  for (const CameraInfo& c : cameras) {
    const CameraIntrinsics& K = c.intrinsics;
    j["cameras"].push_back({{"id", c.id},
                            {"fx", K.fx},
                            {"fy", K.fy},
                            {"cx", K.cx},
                            {"cy", K.cy},
                            {"width", K.width},
                            {"height", K.height},
                            {"extrinsic", pose_to_json(c.extrinsic)}});
  }
  j["frames"] = json::array();
  for (const FrameInfo& f : frames) {
    json fj = {{"timestamp", f.timestamp},
               {"camera_id", f.camera_id},
               {"ego_pose", pose_to_json(f.ego_pose)},
               {"image", f.image},
               {"semantics", f.semantics}};
    if (!f.depth.empty()) fj["depth"] = f.depth;
    j["frames"].push_back(fj);
  }
  j["classes"] = json::array();
  for (const ClassInfo& c : classes) {
    j["classes"].push_back({{"id", c.id}, {"name", c.name}, {"dynamic", c.dynamic}, {"flat", c.flat}});
  }
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  const std::string where = "manifest";
  const auto schema = require<std::string>(j, "schema", where);
  if (schema != kManifestSchema) throw DataError("manifest: unsupported schema '" + schema + "'");
  DatasetManifest m;
  m.scene_id = require<std::string>(j, "scene_id", where);

  std::set<std::string> camera_ids;
  for (const json& cj : require<json>(j, "cameras", where)) {
    CameraInfo c;
    c.id = require<std::string>(cj, "id", where + ".cameras");
    const std::string cw = "camera '" + c.id + "'";
    c.intrinsics.fx = require<double>(cj, "fx", cw);
    c.intrinsics.fy = require<double>(cj, "fy", cw);
    c.intrinsics.cx = require<double>(cj, "cx", cw);
    c.intrinsics.cy = require<double>(cj, "cy", cw);
    c.intrinsics.width = require<int>(cj, "width", cw);
    c.intrinsics.height = require<int>(cj, "height", cw);
    try {
      c.intrinsics.validate();
      c.extrinsic = pose_from_json(require<json>(cj, "extrinsic", cw));
    } catch (const std::runtime_error& e) {
      throw DataError(cw + ": " + e.what());
    }
    check_pose(c.extrinsic, cw + " extrinsic");
    if (!camera_ids.insert(c.id).second) throw DataError("manifest: duplicate camera '" + c.id + "'");
    m.cameras.push_back(std::move(c));
  }

  const json& fjs = require<json>(j, "frames", where);
  if (!fjs.is_array() || fjs.empty()) throw DataError("manifest: empty dataset (no frames)");
  for (std::size_t i = 0; i < fjs.size(); ++i) {
    const json& fj = fjs[i];
    const std::string fw = "frame " + std::to_string(i);
    FrameInfo f;
    f.timestamp = require<double>(fj, "timestamp", fw);
    f.camera_id = require<std::string>(fj, "camera_id", fw);
    if (!camera_ids.count(f.camera_id)) throw DataError(fw + ": unknown camera '" + f.camera_id + "'");
    try {
      f.ego_pose = pose_from_json(require<json>(fj, "ego_pose", fw));
    } catch (const DataError& e) {
      throw DataError(fw + ": " + e.what());
    }
    check_pose(f.ego_pose, fw + " ego_pose");
    f.image = require<std::string>(fj, "image", fw);
    f.semantics = require<std::string>(fj, "semantics", fw);
    if (fj.contains("depth")) f.depth = require<std::string>(fj, "depth", fw);
    m.frames.push_back(std::move(f));
  }

  const json& cls = require<json>(j, "classes", where);
  if (!cls.is_array() || cls.empty()) throw DataError("manifest: empty class table");
  if (cls.size() > 255) throw DataError("manifest: at most 255 classes are supported");
  for (std::size_t i = 0; i < cls.size(); ++i) {
    ClassInfo c;
    c.id = require<int>(cls[i], "id", "class table");
    if (c.id != static_cast<int>(i)) throw DataError("manifest: class ids must be 0..n-1 in order");
    c.name = require<std::string>(cls[i], "name", "class table");
    c.dynamic = cls[i].value("dynamic", false);
    c.flat = cls[i].value("flat", true);
    m.classes.push_back(std::move(c));
  }
  return m;
}

Dataset::Dataset(fs::path root, DatasetManifest manifest) : root_(std::move(root)), manifest_(std::move(manifest)) {}

TrainingView Dataset::load_view(std::size_t i) const {
  const FrameInfo& f = manifest_.frames.at(i);
  const CameraInfo& cam = manifest_.cameras[static_cast<std::size_t>(manifest_.camera_index(f.camera_id))];
  const int W = cam.intrinsics.width;
  const int H = cam.intrinsics.height;
  TrainingView v;
  v.ego_pose = f.ego_pose;
  v.camera_id = f.camera_id;

  const fs::path img_path = root_ / f.image;
  const ImageU8 rgb = read_png(img_path);
  if (rgb.channels != 3) throw DataError(img_path.string() + ": expected an RGB image");
  if (!rgb.same_shape(W, H)) throw DataError(img_path.string() + ": image size differs from camera intrinsics");
  v.image = image_from_bytes(rgb);

  const fs::path sem_path = root_ / f.semantics;
  v.labels = read_png(sem_path);
  if (v.labels.channels != 1) throw DataError(sem_path.string() + ": expected a single-channel class map");
  if (!v.labels.same_shape(W, H)) throw DataError(sem_path.string() + ": class map size differs from the image");

  std::vector<bool> dynamic(256, false);
  for (const ClassInfo& c : manifest_.classes) dynamic[static_cast<std::size_t>(c.id)] = c.dynamic;
  v.supervision_mask = ImageU8(W, H, 1, 0);
  for (std::size_t p = 0; p < v.labels.pixel_count(); ++p) {
    const std::uint8_t l = v.labels.data[p];
    v.supervision_mask.data[p] = (l != kIgnoreClass && !dynamic[l]) ? 1 : 0;
  }
  if (!f.depth.empty()) v.sparse_depth = read_sparse_depth(root_ / f.depth);
  return v;
}

std::vector<TrainingView> Dataset::load_all() const {
  std::vector<TrainingView> views(size());
  parallel_for(size(), [&](std::size_t i) { views[i] = load_view(i); });
  return views;
}

Dataset load_dataset(const fs::path& root) {
  const fs::path mpath = root / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError(mpath.string() + ": cannot open manifest");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m = DatasetManifest::from_json(j);
  } catch (const DataError& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  for (const FrameInfo& f : m.frames) {
    for (const std::string* rel : {&f.image, &f.semantics, &f.depth}) {
      if (rel->empty()) continue;
      if (!fs::exists(root / *rel)) throw DataError((root / *rel).string() + ": referenced file is missing");
    }
  }
  return Dataset(root, std::move(m));
}

void write_manifest(const fs::path& root, const DatasetManifest& manifest) {
  fs::create_directories(root);
  const fs::path mpath = root / "manifest.json";
  std::ofstream out(mpath);
  if (!out) throw DataError(mpath.string() + ": cannot write manifest");
  out << manifest.to_json().dump(2) << "\n";
  if (!out) throw DataError(mpath.string() + ": write failed");
}

std::vector<DepthSample> read_sparse_depth(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open sparse depth");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 12 != 0) throw DataError(path.string() + ": sparse depth size is not a multiple of 12 bytes");
  std::vector<DepthSample> out(bytes.size() / 12);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f[3];
    std::memcpy(f, bytes.data() + i * 12, 12);
    out[i] = {f[0], f[1], f[2]};
    if (!std::isfinite(f[0]) || !std::isfinite(f[1]) || !std::isfinite(f[2])) {
      throw DataError(path.string() + ": non-finite sparse depth sample");
    }
  }
  return out;
}

void write_sparse_depth(const fs::path& path, const std::vector<DepthSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write sparse depth");
  for (const DepthSample& s : samples) {
    const float f[3] = {s.u, s.v, s.depth};
    out.write(reinterpret_cast<const char*>(f), 12);
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

ImageF image_from_bytes(const ImageU8& rgb) {
  ImageF out(rgb.width, rgb.height, rgb.channels);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) out.data[i] = static_cast<float>(rgb.data[i]) / 255.0f;
  return out;
}

}  // namespace roadmesh
