#include "roadmesh/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "roadmesh/error.hpp"
#include "roadmesh/metrics.hpp"
#include "roadmesh/parallel.hpp"
#include "roadmesh/sampling.hpp"

namespace roadmesh {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("train config: bad value for '") + key + "': " + e.what());
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

double TrainConfig::lr_scale(int epoch) const {
  double s = 1.0;
  for (int h : lr_halving_epochs) {
    if (epoch >= h) s *= 0.5;
  }
  return s;
}

void TrainConfig::validate() const {
  for (double lr : {lr_rgb, lr_sem, lr_z, lr_extrinsic}) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("train config: learning rates must be finite and >= 0");
  }
  if (!(rot_clamp_deg > 0.0) || !std::isfinite(rot_clamp_deg) || !(trans_clamp > 0.0) || !std::isfinite(trans_clamp)) {
    throw UsageError("train config: clamps must be finite and positive");
  }
  if (epochs < 1) throw UsageError("train config: epochs must be >= 1");
  if (!(waypoint_radius > 0.0)) throw UsageError("train config: waypoint_radius must be positive");
  if (!(crop_margin >= 0.0)) throw UsageError("train config: crop_margin must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw UsageError("train config: adam betas must lie in [0,1) and eps must be positive");
  }
  if (!(w_sem >= 0.0) || !(w_depth >= 0.0)) throw UsageError("train config: loss weights must be >= 0");
  if (views_per_step < 0) throw UsageError("train config: views_per_step must be >= 0");
  if (passes_per_epoch < 1) throw UsageError("train config: passes_per_epoch must be >= 1");
}

json TrainConfig::to_json() const {
  return {{"lr_rgb", lr_rgb},
          {"lr_sem", lr_sem},
          {"lr_z", lr_z},
          {"lr_extrinsic", lr_extrinsic},
          {"rot_clamp_deg", rot_clamp_deg},
          {"trans_clamp", trans_clamp},
          {"epochs", epochs},
          {"lr_halving_epochs", lr_halving_epochs},
          {"use_waypoints", use_waypoints},
          {"waypoint_radius", waypoint_radius},
          {"crop_margin", crop_margin},
          {"adam_beta1", adam.beta1},
          {"adam_beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"w_sem", w_sem},
          {"w_depth", w_depth},
          {"depth_supervision", depth_supervision},
          {"views_per_step", views_per_step},
          {"passes_per_epoch", passes_per_epoch},
          {"freeze_rgb", freeze_rgb},
          {"freeze_sem", freeze_sem},
          {"freeze_elevation", freeze_elevation},
          {"freeze_extrinsic", freeze_extrinsic},
          {"seed", seed},
          {"eval_each_epoch", eval_each_epoch}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw UsageError("train config: expected an object");
  TrainConfig c;
  const json known = c.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw UsageError("train config: unknown key '" + k + "'");
  }
  read_field(j, "lr_rgb", c.lr_rgb);
  read_field(j, "lr_sem", c.lr_sem);
  read_field(j, "lr_z", c.lr_z);
  read_field(j, "lr_extrinsic", c.lr_extrinsic);
  read_field(j, "rot_clamp_deg", c.rot_clamp_deg);
  read_field(j, "trans_clamp", c.trans_clamp);
  read_field(j, "epochs", c.epochs);
  read_field(j, "lr_halving_epochs", c.lr_halving_epochs);
  read_field(j, "use_waypoints", c.use_waypoints);
  read_field(j, "waypoint_radius", c.waypoint_radius);
  read_field(j, "crop_margin", c.crop_margin);
  read_field(j, "adam_beta1", c.adam.beta1);
  read_field(j, "adam_beta2", c.adam.beta2);
  read_field(j, "adam_eps", c.adam.eps);
  read_field(j, "w_sem", c.w_sem);
  read_field(j, "w_depth", c.w_depth);
  read_field(j, "depth_supervision", c.depth_supervision);
  read_field(j, "views_per_step", c.views_per_step);
  read_field(j, "passes_per_epoch", c.passes_per_epoch);
  read_field(j, "freeze_rgb", c.freeze_rgb);
  read_field(j, "freeze_sem", c.freeze_sem);
  read_field(j, "freeze_elevation", c.freeze_elevation);
  read_field(j, "freeze_extrinsic", c.freeze_extrinsic);
  read_field(j, "seed", c.seed);
  read_field(j, "eval_each_epoch", c.eval_each_epoch);
  c.validate();
  return c;
}

TrainingSet TrainingSet::from_dataset(const Dataset& dataset) {
  const DatasetManifest& m = dataset.manifest();
  TrainingSet t;
  for (const CameraInfo& c : m.cameras) {
    t.camera_ids.push_back(c.id);
    t.intrinsics.push_back(c.intrinsics);
    t.extrinsics.push_back(c.extrinsic);
  }
  t.num_classes = m.num_classes();
  t.views = dataset.load_all();
  for (const FrameInfo& f : m.frames) t.camera_of_view.push_back(m.camera_index(f.camera_id));
  return t;
}

std::vector<Vec2> TrainingSet::ego_positions() const {
  std::vector<Vec2> out;
  out.reserve(views.size());
  for (const TrainingView& v : views) out.emplace_back(v.ego_pose.translation.x(), v.ego_pose.translation.y());
  return out;
}

std::vector<SE3Pose> TrainingSet::ego_poses() const {
  std::vector<SE3Pose> out;
  out.reserve(views.size());
  for (const TrainingView& v : views) out.push_back(v.ego_pose);
  return out;
}

ViewCamera TrainingSet::camera(std::size_t view, const std::vector<ExtrinsicCorrection>& corrections) const {
  const auto c = static_cast<std::size_t>(camera_of_view.at(view));
  return {views[view].ego_pose, extrinsics[c], corrections.at(c), intrinsics[c]};
}

void ModelState::refresh_elevation() { mesh.vertex_z = field.evaluate(mesh.vertex_xy); }

ModelState initialize_model(const TrainingSet& data, const ModelOptions& options) {
  if (data.views.empty()) throw UsageError("initialize_model: no views");
  const std::vector<Vec2> traj = data.ego_positions();
  RoadMesh mesh = init_grid(footprint_from_trajectory(traj, options.footprint_margin), options.spacing,
                            data.num_classes, options.vertex_budget);
  PositionalEncoding pe;
  pe.num_freqs = options.num_freqs;
  pe.bounds = mesh.bounds;
  ElevationField field(pe, options.mlp, options.seed);
  ModelState state{std::move(mesh), std::move(field), data.camera_ids,
                   std::vector<ExtrinsicCorrection>(data.camera_ids.size())};
  state.refresh_elevation();
  return state;
}

PretrainReport pretrain_elevation(ModelState& model, const TrainingSet& data, const PretrainOptions& options) {
  const std::vector<SE3Pose> poses = data.ego_poses();
  const std::vector<Vec3> pts =
      pretrain_points_from_trajectory(poses, options.lateral_halfwidth, options.lateral_step, options.ego_height);
  PretrainReport report = pretrain(model.field, pts, options.iterations, options.lr);
  model.refresh_elevation();
  return report;
}

namespace {

struct GeometryBuffers {
  std::vector<Vec3> positions;
  std::vector<double> rgb;
  std::vector<double> sem;

  RenderGeometry view(std::span<const Face> faces, int K) const { return {positions, faces, rgb, sem, K}; }
};

struct ViewStats {
  double color_sum = 0.0;
  std::size_t color_count = 0;
  double sem_sum = 0.0;
  std::size_t sem_count = 0;
  double depth_sum = 0.0;
  std::size_t depth_count = 0;
  double sse = 0.0;
  std::size_t psnr_count = 0;
};

}  // namespace

ViewEvaluation evaluate_views(const TrainingSet& data, const ModelState& model, const TrainConfig& config,
                              const std::vector<int>& views) {
  std::vector<int> ids = views;
  if (ids.empty()) {
    for (std::size_t i = 0; i < data.views.size(); ++i) ids.push_back(static_cast<int>(i));
  }
  const RoadMesh& mesh = model.mesh;
  const int K = mesh.num_classes;
  GeometryBuffers buf;
  buf.positions.resize(mesh.vertex_count());
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) buf.positions[v] = mesh.position(v);
  const RenderGeometry geom{buf.positions, mesh.faces, mesh.vertex_rgb, mesh.vertex_sem, K};

  std::vector<ViewStats> stats(ids.size());
  std::vector<ImageU8> pred(ids.size());
  std::vector<ImageU8> valid(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const auto vi = static_cast<std::size_t>(ids[i]);
    const TrainingView& view = data.views[vi];
    const ViewCamera cam = data.camera(vi, model.corrections);
    const RasterResult rr = rasterize(cam.camera_to_world(), cam.intrinsics, geom);
    const RenderOutput& out = rr.output;
    const RenderOutput* rp[1] = {&out};
    const TrainingView* vp[1] = {&view};
    ViewStats& s = stats[i];
    const LossTerm lc = color_loss(rp, vp);
    s.color_count = lc.count;
    s.color_sum = lc.value * 3.0 * static_cast<double>(lc.count);
    const LossTerm ls = sem_loss(rp, vp);
    s.sem_count = ls.count;
    s.sem_sum = ls.value * static_cast<double>(ls.count);
    if (config.depth_supervision) {
      const LossTerm ld = depth_loss(rp, vp);
      s.depth_count = ld.count;
      s.depth_sum = ld.value * static_cast<double>(ld.count);
    }
    pred[i] = ImageU8(out.mask.width, out.mask.height, 1, kIgnoreClass);
    valid[i] = ImageU8(out.mask.width, out.mask.height, 1, 0);
    for (std::size_t p = 0; p < out.mask.pixel_count(); ++p) {
      if (!out.mask.data[p] || !view.supervision_mask.data[p]) continue;
      valid[i].data[p] = 1;
      for (int c = 0; c < 3; ++c) {
        const double d = out.color.data[p * 3 + static_cast<std::size_t>(c)] -
                         static_cast<double>(view.image.data[p * 3 + static_cast<std::size_t>(c)]);
        s.sse += d * d;
      }
      s.psnr_count += 3;
      const double* logits = out.semantics.data.data() + p * static_cast<std::size_t>(K);
      pred[i].data[p] = static_cast<std::uint8_t>(std::max_element(logits, logits + K) - logits);
    }
  });

  ViewEvaluation ev;
  ViewStats total;
  double psnr_sum = 0.0;
  int psnr_views = 0;
  for (const ViewStats& s : stats) {
    total.color_sum += s.color_sum;
    total.color_count += s.color_count;
    total.sem_sum += s.sem_sum;
    total.sem_count += s.sem_count;
    total.depth_sum += s.depth_sum;
    total.depth_count += s.depth_count;
    total.sse += s.sse;
    total.psnr_count += s.psnr_count;
    if (s.psnr_count > 0) {
      const double mse = s.sse / static_cast<double>(s.psnr_count);
      psnr_sum += mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
      ++psnr_views;
    }
  }
  ev.pixels = total.psnr_count / 3;
  ev.loss_color = total.color_count ? total.color_sum / (3.0 * static_cast<double>(total.color_count)) : 0.0;
  ev.loss_sem = total.sem_count ? total.sem_sum / static_cast<double>(total.sem_count) : 0.0;
  ev.loss_depth = total.depth_count ? total.depth_sum / static_cast<double>(total.depth_count) : 0.0;
  ev.loss_total = ev.loss_color + config.w_sem * ev.loss_sem + (config.depth_supervision ? config.w_depth * ev.loss_depth : 0.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (total.psnr_count == 0) {
    ev.psnr = nan;
  } else {
    const double mse = total.sse / static_cast<double>(total.psnr_count);
    ev.psnr = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
  }
  ev.psnr_mean = psnr_views ? psnr_sum / psnr_views : nan;

  // Pool the class maps into one strip so mIoU counts every pixel once.
  std::size_t total_px = 0;
  for (const ImageU8& p : pred) total_px += p.pixel_count();
  ImageU8 pp(static_cast<int>(total_px), 1, 1), gg(static_cast<int>(total_px), 1, 1), mm(static_cast<int>(total_px), 1, 1);
  std::size_t off = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TrainingView& view = data.views[static_cast<std::size_t>(ids[i])];
    std::copy(pred[i].data.begin(), pred[i].data.end(), pp.data.begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(view.labels.data.begin(), view.labels.data.end(), gg.data.begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(valid[i].data.begin(), valid[i].data.end(), mm.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += pred[i].pixel_count();
  }
  ev.miou = total_px ? miou(pp, gg, &mm, K) : nan;
  return ev;
}

namespace {

json eval_json(const ViewEvaluation& e) {
  return {{"psnr", metric_value(e.psnr)},
          {"psnr_mean", metric_value(e.psnr_mean)},
          {"miou", metric_value(e.miou)},
          {"loss_color", e.loss_color},
          {"loss_sem", e.loss_sem},
          {"loss_depth", e.loss_depth},
          {"loss_total", e.loss_total},
          {"pixels", e.pixels}};
}

// Fisher-Yates with explicit modulo draws, so the order depends only on the
// generator's raw output.
void shuffle(std::vector<int>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = seed;
  for (std::uint64_t x : {a, b, c}) {
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 31;
  }
  return h;
}

class Trainer {
 public:
  Trainer(const TrainingSet& data, ModelState& model, const TrainConfig& config)
      : data_(data),
        model_(model),
        cfg_(config),
        rgb_state_(model.mesh.vertex_rgb.size()),
        sem_state_(model.mesh.vertex_sem.size()),
        field_state_(model.field.parameter_count()),
        ext_state_(model.corrections.size() * 6),
        ext_params_(model.corrections.size() * 6, 0.0) {
    for (std::size_t c = 0; c < model_.corrections.size(); ++c) {
      ExtrinsicCorrection& corr = model_.corrections[c];
      corr.rot_clamp_deg = cfg_.rot_clamp_deg;
      corr.trans_clamp = cfg_.trans_clamp;
      for (int k = 0; k < 3; ++k) {
        ext_params_[c * 6 + static_cast<std::size_t>(k)] = corr.phi[k];
        ext_params_[c * 6 + 3 + static_cast<std::size_t>(k)] = corr.delta_t[k];
      }
    }
  }

  bool update_rgb() const { return !cfg_.freeze_rgb && cfg_.lr_rgb > 0.0; }
  bool update_sem() const { return !cfg_.freeze_sem && cfg_.lr_sem > 0.0; }
  bool update_z() const { return !cfg_.freeze_elevation && cfg_.lr_z > 0.0; }
  bool update_ext() const { return !cfg_.freeze_extrinsic && cfg_.lr_extrinsic > 0.0; }

  struct StepResult {
    double color = 0.0;
    double sem = 0.0;
    double depth = 0.0;
    double total = 0.0;
    std::size_t empty_terms = 0;
  };

  StepResult step(const SubMesh& sub, const std::vector<Vec2>& xy, const std::vector<int>& batch, double scale) {
    RoadMesh& mesh = model_.mesh;
    const int K = mesh.num_classes;
    const std::size_t nv = sub.vertex_count();

    std::vector<double> z;
    if (update_z()) {
      z = model_.field.forward(xy);
    } else {
      z = sub.gather(mesh.vertex_z, 1);
    }
    GeometryBuffers buf;
    buf.positions.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) buf.positions[i] = Vec3(xy[i].x(), xy[i].y(), z[i]);
    buf.rgb = sub.gather(mesh.vertex_rgb, 3);
    buf.sem = sub.gather(mesh.vertex_sem, K);
    const RenderGeometry geom = buf.view(sub.local_faces, K);

    const std::size_t nb = batch.size();
    std::vector<RasterResult> renders(nb);
    std::vector<ViewCamera> cams(nb);
    parallel_for(nb, [&](std::size_t i) {
      cams[i] = data_.camera(static_cast<std::size_t>(batch[i]), model_.corrections);
      renders[i] = rasterize(cams[i].camera_to_world(), cams[i].intrinsics, geom);
    });

    std::vector<const RenderOutput*> rp(nb);
    std::vector<const TrainingView*> vp(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      rp[i] = &renders[i].output;
      vp[i] = &data_.views[static_cast<std::size_t>(batch[i])];
    }
    StepResult res;
    LossTerm lc = color_loss(rp, vp);
    LossTerm ls = sem_loss(rp, vp);
    res.color = lc.value;
    res.sem = ls.value;
    res.empty_terms += lc.empty + ls.empty;
    for (ImageD& g : ls.grads) {
      for (double& x : g.data) x *= cfg_.w_sem;
    }
    LossTerm ld;
    if (cfg_.depth_supervision) {
      ld = depth_loss(rp, vp);
      res.depth = ld.value;
      res.empty_terms += ld.empty;
      for (ImageD& g : ld.grads) {
        for (double& x : g.data) x *= cfg_.w_depth;
      }
    }
    res.total = res.color + cfg_.w_sem * res.sem + (cfg_.depth_supervision ? cfg_.w_depth * res.depth : 0.0);
    if (!std::isfinite(res.total)) throw NumericError("training loss is not finite");

    BackwardOptions opts;
    opts.attributes = update_rgb() || update_sem();
    opts.geometry = update_z() || update_ext();
    std::vector<RenderGradients> grads(nb);
    parallel_for(nb, [&](std::size_t i) {
      grads[i] = rasterize_backward(renders[i].fragments, &lc.grads[i], &ls.grads[i],
                                    cfg_.depth_supervision ? &ld.grads[i] : nullptr, cams[i], geom, opts);
    });

    // Fixed-order reduction over the batch.
    std::vector<double> g_rgb(opts.attributes ? nv * 3 : 0, 0.0);
    std::vector<double> g_sem(opts.attributes ? nv * static_cast<std::size_t>(K) : 0, 0.0);
    std::vector<double> g_z(opts.geometry ? nv : 0, 0.0);
    std::vector<double> g_ext(ext_params_.size(), 0.0);
    std::vector<int> ext_rows;
    for (std::size_t i = 0; i < nb; ++i) {
      const RenderGradients& g = grads[i];
      for (std::size_t k = 0; k < g_rgb.size(); ++k) g_rgb[k] += g.rgb[k];
      for (std::size_t k = 0; k < g_sem.size(); ++k) g_sem[k] += g.sem[k];
      for (std::size_t k = 0; k < g_z.size(); ++k) g_z[k] += g.z[k];
      if (opts.geometry) {
        const auto c = static_cast<std::size_t>(data_.camera_of_view[static_cast<std::size_t>(batch[i])]);
        for (int k = 0; k < 3; ++k) {
          g_ext[c * 6 + static_cast<std::size_t>(k)] += g.phi[k];
          g_ext[c * 6 + 3 + static_cast<std::size_t>(k)] += g.delta_t[k];
        }
        if (std::find(ext_rows.begin(), ext_rows.end(), static_cast<int>(c)) == ext_rows.end()) {
          ext_rows.push_back(static_cast<int>(c));
        }
      }
    }
    std::sort(ext_rows.begin(), ext_rows.end());

    std::vector<double> g_field;
    if (update_z()) g_field = model_.field.backward(g_z);

    // Validate every group before touching any parameter.
    const std::pair<const char*, std::span<const double>> groups[] = {
        {"vertex_rgb", g_rgb}, {"vertex_sem", g_sem}, {"elevation", g_field}, {"extrinsic", g_ext}};
    for (const auto& [name, g] : groups) {
      if (!all_finite(g)) throw NumericError(std::string("non-finite gradient in parameter group ") + name);
    }

    const std::vector<int>& rows = sub.vertex_indices;
    if (update_rgb()) {
      adam_step_rows(mesh.vertex_rgb, g_rgb, rows, 3, rgb_state_, cfg_.lr_rgb * scale, cfg_.adam, "vertex_rgb");
      for (int v : rows) {
        for (int c = 0; c < 3; ++c) {
          double& x = mesh.vertex_rgb[static_cast<std::size_t>(v) * 3 + static_cast<std::size_t>(c)];
          x = std::clamp(x, 0.0, 1.0);
        }
      }
    }
    if (update_sem()) {
      adam_step_rows(mesh.vertex_sem, g_sem, rows, K, sem_state_, cfg_.lr_sem * scale, cfg_.adam, "vertex_sem");
    }
    if (update_z()) {
      sub.scatter_assign(z, mesh.vertex_z, 1);
      adam_step(model_.field.parameters(), g_field, field_state_, cfg_.lr_z * scale, cfg_.adam, "elevation");
      if (!model_.field.all_finite()) throw NumericError("elevation MLP parameters became non-finite");
    }
    if (update_ext() && !ext_rows.empty()) {
      std::vector<double> g_rows;
      for (int c : ext_rows) {
        for (int k = 0; k < 6; ++k) g_rows.push_back(g_ext[static_cast<std::size_t>(c) * 6 + static_cast<std::size_t>(k)]);
      }
      adam_step_rows(ext_params_, g_rows, ext_rows, 6, ext_state_, cfg_.lr_extrinsic * scale, cfg_.adam, "extrinsic");
      for (int c : ext_rows) {
        const auto cc = static_cast<std::size_t>(c);
        ExtrinsicCorrection& corr = model_.corrections[cc];
        corr.phi = Vec3(ext_params_[cc * 6], ext_params_[cc * 6 + 1], ext_params_[cc * 6 + 2]);
        corr.delta_t = Vec3(ext_params_[cc * 6 + 3], ext_params_[cc * 6 + 4], ext_params_[cc * 6 + 5]);
        corr.clamp();
        for (int k = 0; k < 3; ++k) {
          ext_params_[cc * 6 + static_cast<std::size_t>(k)] = corr.phi[k];
          ext_params_[cc * 6 + 3 + static_cast<std::size_t>(k)] = corr.delta_t[k];
        }
      }
    }
    return res;
  }

 private:
  const TrainingSet& data_;
  ModelState& model_;
  const TrainConfig& cfg_;
  AdamState rgb_state_;
  AdamState sem_state_;
  AdamState field_state_;
  AdamState ext_state_;
  std::vector<double> ext_params_;
};

}  // namespace

TrainReport train(const TrainingSet& data, ModelState& model, const TrainConfig& config, const LogSink& log) {
  config.validate();
  if (data.views.empty()) throw UsageError("train: dataset has no views");
  if (model.corrections.size() != data.camera_ids.size()) throw UsageError("train: one correction per camera required");
  if (model.mesh.num_classes != data.num_classes) throw UsageError("train: mesh class count differs from the dataset");
  const auto t_start = Clock::now();
  const auto emit = [&](const json& j) {
    if (log) log(j);
  };

  TrainReport report;
  model.refresh_elevation();
  report.initial = evaluate_views(data, model, config);
  emit({{"type", "initial"}, {"eval", eval_json(report.initial)}});

  Trainer trainer(data, model, config);
  const std::vector<Vec2> positions = data.ego_positions();
  const WaypointPlanner planner(positions, config.waypoint_radius, config.seed, config.crop_margin);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t_epoch = Clock::now();
    const double scale = config.lr_scale(epoch);
    std::vector<SubAreaTask> tasks;
    if (config.use_waypoints) {
      tasks = planner.epoch_schedule(epoch);
    } else {
      SubAreaTask all;
      for (std::size_t i = 0; i < data.views.size(); ++i) all.views.push_back(static_cast<int>(i));
      tasks.push_back(std::move(all));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_scale = scale;
    double loss_sum = 0.0;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const SubAreaTask& task = tasks[ti];
      const auto t_task = Clock::now();
      const SubMesh sub = config.use_waypoints ? crop_subarea(model.mesh, task.center, task.crop_radius)
                                               : whole_mesh(model.mesh);
      if (sub.empty() || task.views.empty()) {
        emit({{"type", "subarea"}, {"epoch", epoch}, {"task", ti}, {"skipped", true}});
        continue;
      }
      std::vector<Vec2> xy;
      xy.reserve(sub.vertex_count());
      for (int v : sub.vertex_indices) xy.push_back(model.mesh.vertex_xy[static_cast<std::size_t>(v)]);

      double c_sum = 0.0, s_sum = 0.0, d_sum = 0.0, t_sum = 0.0;
      std::size_t steps = 0;
      for (int pass = 0; pass < config.passes_per_epoch; ++pass) {
        std::vector<int> order = task.views;
        std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch), ti, static_cast<std::uint64_t>(pass)));
        shuffle(order, rng);
        const std::size_t per = config.views_per_step > 0 ? static_cast<std::size_t>(config.views_per_step) : order.size();
        for (std::size_t b = 0; b < order.size(); b += per) {
          const std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + per)));
          const auto r = trainer.step(sub, xy, batch, scale);
          c_sum += r.color;
          s_sum += r.sem;
          d_sum += r.depth;
          t_sum += r.total;
          report.empty_loss_warnings += r.empty_terms;
          ++steps;
        }
      }
      model.field.invalidate_cache();
      rec.steps += steps;
      loss_sum += t_sum;
      const double n = static_cast<double>(std::max<std::size_t>(steps, 1));
      emit({{"type", "subarea"},
            {"epoch", epoch},
            {"task", ti},
            {"center", {task.center.x(), task.center.y()}},
            {"views", task.views.size()},
            {"vertices", sub.vertex_count()},
            {"faces", sub.face_indices.size()},
            {"steps", steps},
            {"loss_color", c_sum / n},
            {"loss_sem", s_sum / n},
            {"loss_depth", d_sum / n},
            {"loss_total", t_sum / n},
            {"seconds", seconds_since(t_task)}});
    }
    report.steps += rec.steps;
    rec.mean_step_loss = rec.steps ? loss_sum / static_cast<double>(rec.steps) : 0.0;
    if (trainer.update_z()) model.refresh_elevation();
    if (config.eval_each_epoch || epoch == config.epochs) rec.eval = evaluate_views(data, model, config);
    rec.seconds = seconds_since(t_epoch);
    emit({{"type", "epoch"},
          {"epoch", epoch},
          {"lr_scale", scale},
          {"steps", rec.steps},
          {"mean_step_loss", rec.mean_step_loss},
          {"eval", eval_json(rec.eval)},
          {"empty_loss_warnings", report.empty_loss_warnings},
          {"seconds", rec.seconds}});
    report.epochs.push_back(rec);
  }
  report.seconds = seconds_since(t_start);
  return report;
}

}  // namespace roadmesh
