#pragma once

// Structured configuration for the command-line pipeline. Every section is
// optional in the file; missing fields keep their defaults and unknown keys
// are rejected with UsageError.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "roadmesh/synthetic.hpp"
#include "roadmesh/trainer.hpp"

namespace roadmesh {

struct EvalOptions {
  double px_per_meter = 10.0;
  double keep_fraction = 0.97;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  ModelOptions mesh;
  TrainConfig train;
  bool pretrain_enabled = false;
  PretrainOptions pretrain;
  SyntheticScene scene = SyntheticScene::rolling_preset();
  SynthConfig synth;
  EvalOptions eval;
  std::string export_format = "ply";

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);
  void validate() const;
};

}  // namespace roadmesh
