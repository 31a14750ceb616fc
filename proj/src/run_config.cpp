#include "roadmesh/run_config.hpp"

#include <fstream>

#include "roadmesh/error.hpp"

namespace roadmesh {

using nlohmann::json;

namespace {

void check_keys(const json& j, const json& known, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw UsageError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + ": bad value for '" + key + "': " + e.what());
  }
}

json mesh_json(const ModelOptions& m) {
  return {{"spacing", m.spacing},
          {"footprint_margin", m.footprint_margin},
          {"num_freqs", m.num_freqs},
          {"hidden_layers", m.mlp.hidden_layers},
          {"width", m.mlp.width},
          {"vertex_budget", m.vertex_budget}};
}

json pretrain_json(bool enabled, const PretrainOptions& p) {
  return {{"enabled", enabled},
          {"lateral_halfwidth", p.lateral_halfwidth},
          {"lateral_step", p.lateral_step},
          {"ego_height", p.ego_height},
          {"iterations", p.iterations},
          {"lr", p.lr}};
}

json synth_json(const SynthConfig& s) {
  return {{"n_views", s.n_views},
          {"width", s.width},
          {"height", s.height},
          {"depth_samples_per_view", s.depth_samples_per_view},
          {"perturb_rot_deg", s.perturb_rot_deg},
          {"perturb_trans_m", s.perturb_trans_m},
          {"grid_step", s.grid_step}};
}

json eval_json(const EvalOptions& e) {
  return {{"px_per_meter", e.px_per_meter}, {"keep_fraction", e.keep_fraction}};
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["mesh"] = mesh_json(mesh);
  j["train"] = train.to_json();
  j["pretrain"] = pretrain_json(pretrain_enabled, pretrain);
  j["scene"] = scene.to_json();
  j["synth"] = synth_json(synth);
  j["eval"] = eval_json(eval);
  j["export_format"] = export_format;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_keys(j, c.to_json(), "config");
  get(j, "seed", c.seed, "config");
  get(j, "threads", c.threads, "config");
  get(j, "export_format", c.export_format, "config");
  if (j.contains("mesh")) {
    const json& m = j.at("mesh");
    check_keys(m, mesh_json(c.mesh), "config.mesh");
    get(m, "spacing", c.mesh.spacing, "config.mesh");
    get(m, "footprint_margin", c.mesh.footprint_margin, "config.mesh");
    get(m, "num_freqs", c.mesh.num_freqs, "config.mesh");
    get(m, "hidden_layers", c.mesh.mlp.hidden_layers, "config.mesh");
    get(m, "width", c.mesh.mlp.width, "config.mesh");
    get(m, "vertex_budget", c.mesh.vertex_budget, "config.mesh");
  }
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    check_keys(p, pretrain_json(c.pretrain_enabled, c.pretrain), "config.pretrain");
    get(p, "enabled", c.pretrain_enabled, "config.pretrain");
    get(p, "lateral_halfwidth", c.pretrain.lateral_halfwidth, "config.pretrain");
    get(p, "lateral_step", c.pretrain.lateral_step, "config.pretrain");
    get(p, "ego_height", c.pretrain.ego_height, "config.pretrain");
    get(p, "iterations", c.pretrain.iterations, "config.pretrain");
    get(p, "lr", c.pretrain.lr, "config.pretrain");
  }
  if (j.contains("scene")) c.scene = SyntheticScene::from_json(j.at("scene"));
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    check_keys(s, synth_json(c.synth), "config.synth");
    get(s, "n_views", c.synth.n_views, "config.synth");
    get(s, "width", c.synth.width, "config.synth");
    get(s, "height", c.synth.height, "config.synth");
    get(s, "depth_samples_per_view", c.synth.depth_samples_per_view, "config.synth");
    get(s, "perturb_rot_deg", c.synth.perturb_rot_deg, "config.synth");
    get(s, "perturb_trans_m", c.synth.perturb_trans_m, "config.synth");
    get(s, "grid_step", c.synth.grid_step, "config.synth");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, eval_json(c.eval), "config.eval");
    get(e, "px_per_meter", c.eval.px_per_meter, "config.eval");
    get(e, "keep_fraction", c.eval.keep_fraction, "config.eval");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  if (threads < 1) throw UsageError("config: threads must be >= 1");
  if (!(mesh.spacing > 0.0)) throw UsageError("config.mesh: spacing must be positive");
  if (!(mesh.footprint_margin >= 0.0)) throw UsageError("config.mesh: footprint_margin must be >= 0");
  if (mesh.num_freqs < 0 || mesh.mlp.hidden_layers < 1 || mesh.mlp.width < 1) {
    throw UsageError("config.mesh: invalid elevation network shape");
  }
  train.validate();
  if (pretrain.iterations < 0 || !(pretrain.lr > 0.0) || !(pretrain.lateral_step > 0.0) ||
      !(pretrain.lateral_halfwidth >= 0.0)) {
    throw UsageError("config.pretrain: invalid values");
  }
  scene.validate();
  if (!(eval.px_per_meter > 0.0) || !(eval.keep_fraction > 0.0 && eval.keep_fraction <= 1.0)) {
    throw UsageError("config.eval: invalid values");
  }
  if (export_format != "ply" && export_format != "obj") throw UsageError("config: export_format must be ply or obj");
}

}  // namespace roadmesh
