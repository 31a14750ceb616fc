#pragma once

// Checkpoint directory layout:
//   mesh.bin          "RMMESH01", uint64 header length, JSON header, then
//                     float64-le arrays z, rgb, sem
//   field.bin         elevation MLP (see ElevationField::save)
//   corrections.json  per-camera extrinsic corrections
//   config.json       resolved configuration snapshot

#include <filesystem>

#include <json.hpp>

#include "roadmesh/trainer.hpp"

namespace roadmesh {

void save_checkpoint(const std::filesystem::path& dir, const ModelState& model, const nlohmann::json& config);

// Throws DataError when the directory or any part is missing or corrupt.
ModelState load_checkpoint(const std::filesystem::path& dir);

nlohmann::json load_checkpoint_config(const std::filesystem::path& dir);

void save_mesh_state(const std::filesystem::path& path, const RoadMesh& mesh);
RoadMesh load_mesh_state(const std::filesystem::path& path);

}  // namespace roadmesh
