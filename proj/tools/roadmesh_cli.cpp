// roadmesh: synth | train | eval | export | render-bev

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "roadmesh/checkpoint.hpp"
#include "roadmesh/dataset_io.hpp"
#include "roadmesh/error.hpp"
#include "roadmesh/evaluation.hpp"
#include "roadmesh/parallel.hpp"
#include "roadmesh/run_config.hpp"
#include "roadmesh/sampling.hpp"
#include "roadmesh/synthetic.hpp"
#include "roadmesh/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roadmesh;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::optional<std::string> format;
  std::optional<double> px_per_meter;
  std::optional<double> waypoint_radius;
  std::optional<int> epochs;
  std::optional<int> n_views;
  bool no_waypoint = false;
  bool freeze_elevation = false;
  bool freeze_extrinsic = false;
  bool pretrain_elevation = false;
  bool dump_waypoints = false;
  std::optional<int> dump_fragments;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Config file (or fallback) first, then flags on top.
RunConfig resolve(const Options& o, const std::optional<json>& fallback = std::nullopt) {
  RunConfig c;
  if (!o.config.empty()) {
    c = RunConfig::from_file(o.config);
  } else if (fallback) {
    c = RunConfig::from_json(*fallback);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.format) c.export_format = *o.format;
  if (o.px_per_meter) c.eval.px_per_meter = *o.px_per_meter;
  if (o.waypoint_radius) c.train.waypoint_radius = *o.waypoint_radius;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.n_views) c.synth.n_views = *o.n_views;
  if (o.no_waypoint) c.train.use_waypoints = false;
  if (o.freeze_elevation) c.train.freeze_elevation = true;
  if (o.freeze_extrinsic) c.train.freeze_extrinsic = true;
  if (o.pretrain_elevation) c.pretrain_enabled = true;
  c.mesh.seed = c.seed;
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  c.validate();
  set_num_threads(c.threads);
  return c;
}

// Thread count is not part of a checkpoint's identity.
json checkpoint_config(const RunConfig& c) {
  json j = c.to_json();
  j.erase("threads");
  return j;
}

MeshFormat parse_format(const std::string& s) {
  if (s == "ply") return MeshFormat::kPly;
  if (s == "obj") return MeshFormat::kObj;
  throw UsageError("unknown export format '" + s + "' (expected ply or obj)");
}

void check_cameras(const ModelState& model, const TrainingSet& data) {
  if (model.camera_ids != data.camera_ids) throw DataError("checkpoint cameras do not match the dataset");
  if (model.mesh.num_classes != data.num_classes) throw DataError("checkpoint class count does not match the dataset");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

int cmd_synth(const Options& o) {
  require(o.out, "--out");
  const RunConfig c = resolve(o);
  const fs::path out = o.out;
  fs::create_directories(out);
  generate_synthetic(c.scene, c.synth, out);
  write_json(out / "run_config.json", c.to_json());
  std::cout << "wrote " << c.synth.n_views << " views to " << out.string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  require(o.dataset, "--dataset");
  require(o.out, "--out");
  const RunConfig c = resolve(o);
  const fs::path out = o.out;
  fs::create_directories(out);
  write_json(out / "run_config.json", c.to_json());

  const Dataset dataset = load_dataset(o.dataset);
  const TrainingSet data = TrainingSet::from_dataset(dataset);
  ModelState model = initialize_model(data, c.mesh);
  std::ofstream metrics(out / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw DataError("cannot write " + (out / "metrics.jsonl").string());
  metrics << json{{"type", "mesh"},
                  {"vertices", model.mesh.vertex_count()},
                  {"faces", model.mesh.faces.size()},
                  {"spacing", c.mesh.spacing}}
                 .dump()
          << '\n';
  if (c.pretrain_enabled) {
    const PretrainReport pr = pretrain_elevation(model, data, c.pretrain);
    metrics << json{{"type", "pretrain"}, {"initial_rmse", pr.initial_rmse}, {"final_rmse", pr.final_rmse}}.dump()
            << '\n';
  }
  if (o.dump_waypoints) {
    const WaypointPlanner planner(data.ego_positions(), c.train.waypoint_radius, c.train.seed, c.train.crop_margin);
    json plans = json::array();
    for (int e = 1; e <= c.train.epochs; ++e) plans.push_back(planner.plan(e).to_json());
    write_json(out / "waypoints.json", plans);
  }

  const json ckpt_config = checkpoint_config(c);
  const fs::path ckpt = out / "checkpoint";
  const LogSink log = [&](const json& rec) {
    metrics << rec.dump() << '\n';
    metrics.flush();
    if (rec.value("type", "") == "epoch") save_checkpoint(ckpt, model, ckpt_config);
  };
  const TrainReport report = train(data, model, c.train, log);
  if (report.epochs.empty()) save_checkpoint(ckpt, model, ckpt_config);
  write_bev_maps(render_bev_maps(model.mesh, c.eval.px_per_meter), out / "bev");
  const ViewEvaluation& last = report.epochs.empty() ? report.initial : report.epochs.back().eval;
  std::cout << json{{"epochs", report.epochs.size()},
                    {"steps", report.steps},
                    {"psnr", metric_value(last.psnr)},
                    {"miou", metric_value(last.miou)}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.dataset, "--dataset");
  const ModelState model = load_checkpoint(o.checkpoint);
  const RunConfig c = resolve(o, load_checkpoint_config(o.checkpoint));
  const Dataset dataset = load_dataset(o.dataset);
  const TrainingSet data = TrainingSet::from_dataset(dataset);
  check_cameras(model, data);
  const EvalReport report = evaluate_model(dataset, data, model, c.train, c.eval);
  const json j = report.to_json();
  if (!o.out.empty()) {
    const fs::path out = o.out;
    fs::create_directories(out);
    write_json(out / "eval.json", j);
    write_json(out / "run_config.json", c.to_json());
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_export(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  const ModelState model = load_checkpoint(o.checkpoint);
  const RunConfig c = resolve(o, load_checkpoint_config(o.checkpoint));
  const MeshFormat format = parse_format(c.export_format);
  const fs::path out = o.out;
  fs::create_directories(out);
  export_mesh(model.mesh, out / ("mesh." + c.export_format), format);
  write_bev_maps(render_bev_maps(model.mesh, c.eval.px_per_meter), out / "bev");
  write_json(out / "run_config.json", c.to_json());
  return 0;
}

void dump_fragments(const ModelState& model, const TrainingSet& data, int view, const fs::path& dir) {
  if (view < 0 || static_cast<std::size_t>(view) >= data.views.size()) {
    throw UsageError("--dump-fragments: view index out of range");
  }
  const RoadMesh& mesh = model.mesh;
  std::vector<Vec3> positions(mesh.vertex_count());
  for (std::size_t v = 0; v < positions.size(); ++v) positions[v] = mesh.position(v);
  const RenderGeometry geom{positions, mesh.faces, mesh.vertex_rgb, mesh.vertex_sem, mesh.num_classes};
  const ViewCamera cam = data.camera(static_cast<std::size_t>(view), model.corrections);
  const FragmentBuffer frag = rasterize(cam.camera_to_world(), cam.intrinsics, geom).fragments;

  // Face id + 1 packed into RGB bytes, 0 where uncovered.
  ImageU8 ids(frag.width, frag.height, 3);
  std::vector<float> depth(frag.size());
  for (std::size_t p = 0; p < frag.size(); ++p) {
    const auto id = static_cast<std::uint32_t>(frag.face[p] + 1);
    ids.data[3 * p] = static_cast<std::uint8_t>(id & 0xff);
    ids.data[3 * p + 1] = static_cast<std::uint8_t>((id >> 8) & 0xff);
    ids.data[3 * p + 2] = static_cast<std::uint8_t>((id >> 16) & 0xff);
    depth[p] = static_cast<float>(frag.depth[p]);
  }
  const std::string stem = "view" + std::to_string(view);
  write_png(dir / (stem + "_face_id.png"), ids);
  std::ofstream raw(dir / (stem + "_depth.f32"), std::ios::binary);
  raw.write(reinterpret_cast<const char*>(depth.data()), static_cast<std::streamsize>(depth.size() * sizeof(float)));
}

int cmd_render_bev(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  const ModelState model = load_checkpoint(o.checkpoint);
  const RunConfig c = resolve(o, load_checkpoint_config(o.checkpoint));
  const fs::path out = o.out;
  fs::create_directories(out);
  write_bev_maps(render_bev_maps(model.mesh, c.eval.px_per_meter), out);
  if (o.dump_fragments) {
    require(o.dataset, "--dataset");
    const Dataset dataset = load_dataset(o.dataset);
    const TrainingSet data = TrainingSet::from_dataset(dataset);
    check_cameras(model, data);
    dump_fragments(model, data, *o.dump_fragments, out);
  }
  write_json(out / "run_config.json", c.to_json());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Road surface mesh reconstruction"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--threads", o.threads, "Worker thread cap")->check(CLI::PositiveNumber);

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", o.out, "Dataset directory");
  synth->add_option("--n-views", o.n_views, "Number of views");

  CLI::App* trn = app.add_subcommand("train", "Train a mesh on a dataset");
  trn->add_option("--dataset", o.dataset, "Dataset directory");
  trn->add_option("--out", o.out, "Output directory");
  trn->add_option("--epochs", o.epochs, "Epoch count");
  trn->add_option("--waypoint-radius", o.waypoint_radius, "Sub-area radius R in meters");
  trn->add_option("--px-per-meter", o.px_per_meter, "BEV resolution");
  trn->add_flag("--no-waypoint", o.no_waypoint, "Train on the whole area every step");
  trn->add_flag("--freeze-elevation", o.freeze_elevation, "Keep the elevation field fixed");
  trn->add_flag("--freeze-extrinsic", o.freeze_extrinsic, "Keep extrinsic corrections at zero");
  trn->add_flag("--pretrain-elevation", o.pretrain_elevation, "Fit the field to the trajectory first");
  trn->add_flag("--dump-waypoints", o.dump_waypoints, "Write the per-epoch waypoint plans");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  ev->add_option("--dataset", o.dataset, "Dataset directory");
  ev->add_option("--out", o.out, "Report directory");

  CLI::App* ex = app.add_subcommand("export", "Export mesh and BEV maps");
  ex->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  ex->add_option("--out", o.out, "Output directory");
  ex->add_option("--format", o.format, "ply or obj");
  ex->add_option("--px-per-meter", o.px_per_meter, "BEV resolution");

  CLI::App* bev = app.add_subcommand("render-bev", "Render BEV maps from a checkpoint");
  bev->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  bev->add_option("--out", o.out, "Output directory");
  bev->add_option("--px-per-meter", o.px_per_meter, "BEV resolution");
  bev->add_option("--dataset", o.dataset, "Dataset directory (for --dump-fragments)");
  bev->add_option("--dump-fragments", o.dump_fragments, "Also dump the fragment buffer of this view");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (trn->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (ex->parsed()) return cmd_export(o);
    if (bev->parsed()) return cmd_render_bev(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
