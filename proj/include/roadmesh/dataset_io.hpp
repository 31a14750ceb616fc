#pragma once

// On-disk posed-image datasets.
//
// Layout under a root directory (all manifest paths are relative to it):
//   manifest.json          schema "romespec.v1"
//   images/*.png           8-bit RGB
//   semantics/*.png        8-bit gray class ids, 255 = ignore
//   depth/*.f32            optional sparse depth, little-endian float32 (u, v, depth) triples

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadmesh/geometry.hpp"
#include "roadmesh/losses.hpp"

namespace roadmesh {

inline constexpr const char* kManifestSchema = "romespec.v1";

struct ClassInfo {
  int id = 0;
  std::string name;
  bool dynamic = false;
  bool flat = true;
};

struct CameraInfo {
  std::string id;
  CameraIntrinsics intrinsics;
  SE3Pose extrinsic;  // camera-to-ego
};

struct FrameInfo {
  double timestamp = 0.0;
  std::string camera_id;
  SE3Pose ego_pose;  // ego-to-world
  std::string image;
  std::string semantics;
  std::string depth;  // empty when absent
};

struct DatasetManifest {
  std::string scene_id;
  std::vector<CameraInfo> cameras;
  std::vector<FrameInfo> frames;
  std::vector<ClassInfo> classes;  // ids 0..n-1, in order

  int num_classes() const { return static_cast<int>(classes.size()); }
  // Index into cameras; throws DataError for an unknown id.
  int camera_index(const std::string& id) const;
  std::vector<int> flat_classes() const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

class Dataset {
 public:
  Dataset(std::filesystem::path root, DatasetManifest manifest);

  const std::filesystem::path& root() const { return root_; }
  const DatasetManifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.frames.size(); }

  // Decodes one frame. Dynamic classes and the ignore id are folded into the
  // supervision mask.
  TrainingView load_view(std::size_t i) const;
  std::vector<TrainingView> load_all() const;

 private:
  std::filesystem::path root_;
  DatasetManifest manifest_;
};

// Parses and validates root/manifest.json: schema, camera references, class
// table, existence of every referenced file. Errors carry the offending path.
Dataset load_dataset(const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);

std::vector<DepthSample> read_sparse_depth(const std::filesystem::path& path);
void write_sparse_depth(const std::filesystem::path& path, const std::vector<DepthSample>& samples);

ImageF image_from_bytes(const ImageU8& rgb);

nlohmann::json pose_to_json(const SE3Pose& pose);
SE3Pose pose_from_json(const nlohmann::json& j);

}  // namespace roadmesh
