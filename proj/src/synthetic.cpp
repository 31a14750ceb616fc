#include "roadmesh/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "roadmesh/error.hpp"
#include "roadmesh/parallel.hpp"

namespace roadmesh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDeg = std::numbers::pi / 180.0;
const Vec3 kSkyColor(0.55, 0.70, 0.90);

double floor_mod(double a, double p) { return a - p * std::floor(a / p); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Soft membership of q in [a, b] with a transition of width w centered on
// each end.
double soft_interval(double q, double a, double b, double w) {
  return smoothstep((q - a) / w + 0.5) * smoothstep((b - q) / w + 0.5);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(ix) ^ splitmix(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Smooth value noise in [-1, 1] with lattice spacing cell.
double value_noise(double x, double y, double cell, std::uint64_t seed) {
  const double fx = x / cell;
  const double fy = y / cell;
  const double x0 = std::floor(fx);
  const double y0 = std::floor(fy);
  const double tx = smoothstep(fx - x0);
  const double ty = smoothstep(fy - y0);
  const auto ix = static_cast<std::int64_t>(x0);
  const auto iy = static_cast<std::int64_t>(y0);
  const double a = lattice(ix, iy, seed);
  const double b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed);
  const double d = lattice(ix + 1, iy + 1, seed);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

double mottle(double x, double y, std::uint64_t seed) {
  return (value_noise(x, y, 1.2, seed) + 0.5 * value_noise(x, y, 0.6, seed + 1)) / 1.5;
}

// Paint layout in road coordinates.
constexpr double kEdgeInset = 0.5;
constexpr double kLineWidth = 1.0;
constexpr double kDashPeriod = 8.0;
constexpr double kDashLength = 4.0;
constexpr double kCenterHalfwidth = 0.5;
constexpr double kCrosswalkPeriod = 40.0;
constexpr double kCrosswalkStart = 22.0;
constexpr double kCrosswalkLength = 4.0;
constexpr double kStripePeriod = 2.0;
constexpr double kEdgeSoftness = 0.15;

Vec3 random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = 2.0 * u(rng) - 1.0;
  const double a = kTwoPi * u(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(a), r * std::sin(a), z};
}

void write_f32(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw DataError(path.string() + ": write failed");
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << j.dump(2) << "\n";
}

}  // namespace

double SyntheticScene::elevation(double x, double y) const {
  double z = z0 + gx * x + gy * y;
  for (const Sinusoid& w : waves) z += w.amplitude * std::sin(kTwoPi * (w.kx * x + w.ky * y) + w.phase);
  return z;
}

Vec2 SyntheticScene::elevation_gradient(double x, double y) const {
  Vec2 g(gx, gy);
  for (const Sinusoid& w : waves) {
    const double c = w.amplitude * kTwoPi * std::cos(kTwoPi * (w.kx * x + w.ky * y) + w.phase);
    g += c * Vec2(w.kx, w.ky);
  }
  return g;
}

double SyntheticScene::gradient_bound() const {
  double b = std::hypot(gx, gy);
  for (const Sinusoid& w : waves) b += std::abs(w.amplitude) * kTwoPi * std::hypot(w.kx, w.ky);
  return b;
}

double SyntheticScene::wave_amplitude() const {
  double a = 0.0;
  for (const Sinusoid& w : waves) a += std::abs(w.amplitude);
  return a;
}

PathCoords SyntheticScene::path_coords(double x, double y) const {
  if (path == PathKind::kStraight) return {x, y};
  const double dx = x;
  const double dy = arc_radius - y;
  return {arc_radius * std::atan2(dx, dy), arc_radius - std::hypot(dx, dy)};
}

Vec2 SyntheticScene::path_point(double along) const {
  if (path == PathKind::kStraight) return {along, 0.0};
  const double a = along / arc_radius;
  return {arc_radius * std::sin(a), arc_radius * (1.0 - std::cos(a))};
}

double SyntheticScene::path_heading(double along) const {
  return path == PathKind::kStraight ? 0.0 : along / arc_radius;
}

int SyntheticScene::class_at(double x, double y) const {
  const PathCoords pc = path_coords(x, y);
  const double l = pc.lateral;
  const double s = pc.along;
  const double al = std::abs(l);
  if (al > road_halfwidth) return kSidewalk;
  const double edge_outer = road_halfwidth - kEdgeInset;
  const double inner = edge_outer - kLineWidth;
  if (al >= inner && al <= edge_outer) return kLaneMarking;
  const double cw = floor_mod(s, kCrosswalkPeriod);
  if (cw >= kCrosswalkStart && cw <= kCrosswalkStart + kCrosswalkLength && al < inner) {
    return floor_mod(l + inner, kStripePeriod) < kLineWidth ? kCrosswalk : kRoad;
  }
  if (al <= kCenterHalfwidth && floor_mod(s, kDashPeriod) < kDashLength) return kLaneMarking;
  return kRoad;
}

Vec3 SyntheticScene::color_at(double x, double y) const {
  const PathCoords pc = path_coords(x, y);
  const double l = pc.lateral;
  const double s = pc.along;
  const double al = std::abs(l);
  const double w = kEdgeSoftness;
  const double n = mottle(x, y, texture_seed);

  const Vec3 asphalt = Vec3(0.30, 0.31, 0.33) + Vec3::Constant(0.06 * n);
  const Vec3 walk = Vec3(0.62, 0.58, 0.52) + Vec3::Constant(0.05 * n);
  const Vec3 paint(0.90, 0.90, 0.86);
  const Vec3 zebra(0.93, 0.88, 0.55);

  const double walk_alpha = smoothstep((al - road_halfwidth) / w + 0.5);
  Vec3 c = asphalt * (1.0 - walk_alpha) + walk * walk_alpha;

  const double edge_outer = road_halfwidth - kEdgeInset;
  const double inner = edge_outer - kLineWidth;
  const double edge_alpha = soft_interval(al, inner, edge_outer, w);
  c = c * (1.0 - edge_alpha) + paint * edge_alpha;

  const double cw = floor_mod(s, kCrosswalkPeriod);
  const double band = soft_interval(cw, kCrosswalkStart, kCrosswalkStart + kCrosswalkLength, w);
  const double inside = soft_interval(l, -inner, inner, w);
  // Stripe membership measured against the nearest stripe so the soft edge
  // is symmetric.
  const double phase = floor_mod(l + inner + kStripePeriod * 0.25, kStripePeriod) - kStripePeriod * 0.25;
  const double stripe = soft_interval(phase, 0.0, kLineWidth, w);
  const double zebra_alpha = band * inside * stripe;

  const double dash_phase = floor_mod(s + kDashPeriod * 0.25, kDashPeriod) - kDashPeriod * 0.25;
  const double dash = soft_interval(dash_phase, 0.0, kDashLength, w) * soft_interval(l, -kCenterHalfwidth, kCenterHalfwidth, w);
  const double dash_alpha = dash * (1.0 - band * inside);

  c = c * (1.0 - zebra_alpha) + zebra * zebra_alpha;
  c = c * (1.0 - dash_alpha) + paint * dash_alpha;
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

SE3Pose SyntheticScene::ego_pose(double along) const {
  const Vec2 p = path_point(along);
  const double h = path_heading(along);
  const Vec2 dir(std::cos(h), std::sin(h));
  double pitch = 0.0;
  if (follow_slope) pitch = std::atan(elevation_gradient(p.x(), p.y()).dot(dir));
  const Vec3 fwd(dir.x() * std::cos(pitch), dir.y() * std::cos(pitch), std::sin(pitch));
  const Vec3 left(-dir.y(), dir.x(), 0.0);
  SE3Pose pose;
  pose.rotation.col(0) = fwd;
  pose.rotation.col(1) = left;
  pose.rotation.col(2) = fwd.cross(left);
  pose.translation = Vec3(p.x(), p.y(), elevation(p.x(), p.y()) + ego_height);
  return pose;
}

SE3Pose SyntheticScene::camera_extrinsic(std::size_t camera) const {
  const SyntheticCamera& c = cameras.at(camera);
  const double psi = c.yaw_deg * kDeg;
  const double th = c.pitch_deg * kDeg;
  const Vec3 fwd(std::cos(th) * std::cos(psi), std::cos(th) * std::sin(psi), -std::sin(th));
  const Vec3 right(std::sin(psi), -std::cos(psi), 0.0);
  SE3Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = fwd.cross(right);
  pose.rotation.col(2) = fwd;
  pose.translation = c.offset;
  return pose;
}

CameraIntrinsics SyntheticScene::camera_intrinsics(std::size_t camera, int width, int height) const {
  const double f = 0.5 * width / std::tan(0.5 * cameras.at(camera).hfov_deg * kDeg);
  CameraIntrinsics K;
  K.fx = f;
  K.fy = f;
  K.cx = 0.5 * width;
  K.cy = 0.5 * height;
  K.width = width;
  K.height = height;
  return K;
}

void SyntheticScene::validate() const {
  if (waves.size() > 3) throw UsageError("synthetic scene: at most three sinusoids");
  if (!(path_length >= 0.0)) throw UsageError("synthetic scene: path_length must be non-negative");
  if (path == PathKind::kArc && !(arc_radius > 0.0)) throw UsageError("synthetic scene: arc_radius must be positive");
  if (!(ego_height > kNearPlane)) throw UsageError("synthetic scene: ego_height must exceed the near plane");
  if (!(max_range > 0.0)) throw UsageError("synthetic scene: max_range must be positive");
  if (!(road_halfwidth > kEdgeInset + kLineWidth)) throw UsageError("synthetic scene: road_halfwidth too small");
  if (cameras.empty()) throw UsageError("synthetic scene: no cameras");
  for (const SyntheticCamera& c : cameras) {
    if (!(c.hfov_deg > 0.0 && c.hfov_deg < 170.0)) throw UsageError("synthetic scene: hfov_deg out of range");
  }
}

json SyntheticScene::to_json() const {
  json j;
  j["z0"] = z0;
  j["gx"] = gx;
  j["gy"] = gy;
  j["waves"] = json::array();
  for (const Sinusoid& w : waves) {
    j["waves"].push_back({{"amplitude", w.amplitude}, {"kx", w.kx}, {"ky", w.ky}, {"phase", w.phase}});
  }
  j["path"] = path == PathKind::kStraight ? "straight" : "arc";
  j["path_length"] = path_length;
  j["arc_radius"] = arc_radius;
  j["ego_height"] = ego_height;
  j["follow_slope"] = follow_slope;
  j["cameras"] = json::array();
  for (const SyntheticCamera& c : cameras) {
    j["cameras"].push_back({{"id", c.id},
                            {"yaw_deg", c.yaw_deg},
                            {"pitch_deg", c.pitch_deg},
                            {"offset", {c.offset.x(), c.offset.y(), c.offset.z()}},
                            {"hfov_deg", c.hfov_deg}});
  }
  j["max_range"] = max_range;
  j["texture_seed"] = texture_seed;
  j["road_halfwidth"] = road_halfwidth;
  return j;
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; })) {
      throw UsageError(where + ": unknown key '" + k + "'");
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

SyntheticScene SyntheticScene::from_json(const json& j) {
  const std::string where = "scene";
  reject_unknown(j, {"z0", "gx", "gy", "waves", "path", "path_length", "arc_radius", "ego_height", "follow_slope",
                     "cameras", "max_range", "texture_seed", "road_halfwidth", "preset"},
                 where);
  SyntheticScene s;
  if (j.contains("preset")) {
    const std::string p = j.at("preset").get<std::string>();
    if (p == "rolling") {
      s = rolling_preset();
    } else if (p == "steep") {
      s = steep_preset();
    } else if (p != "flat") {
      throw UsageError(where + ": unknown preset '" + p + "'");
    }
  }
  read_opt(j, "z0", s.z0, where);
  read_opt(j, "gx", s.gx, where);
  read_opt(j, "gy", s.gy, where);
  if (j.contains("waves")) {
    s.waves.clear();
    for (const json& wj : j.at("waves")) {
      reject_unknown(wj, {"amplitude", "kx", "ky", "phase"}, where + ".waves");
      Sinusoid w;
      read_opt(wj, "amplitude", w.amplitude, where);
      read_opt(wj, "kx", w.kx, where);
      read_opt(wj, "ky", w.ky, where);
      read_opt(wj, "phase", w.phase, where);
      s.waves.push_back(w);
    }
  }
  if (j.contains("path")) {
    const std::string p = j.at("path").get<std::string>();
    if (p == "straight") {
      s.path = PathKind::kStraight;
    } else if (p == "arc") {
      s.path = PathKind::kArc;
    } else {
      throw UsageError(where + ": path must be 'straight' or 'arc'");
    }
  }
  read_opt(j, "path_length", s.path_length, where);
  read_opt(j, "arc_radius", s.arc_radius, where);
  read_opt(j, "ego_height", s.ego_height, where);
  read_opt(j, "follow_slope", s.follow_slope, where);
  if (j.contains("cameras")) {
    s.cameras.clear();
    for (const json& cj : j.at("cameras")) {
      reject_unknown(cj, {"id", "yaw_deg", "pitch_deg", "offset", "hfov_deg"}, where + ".cameras");
      SyntheticCamera c;
      read_opt(cj, "id", c.id, where);
      read_opt(cj, "yaw_deg", c.yaw_deg, where);
      read_opt(cj, "pitch_deg", c.pitch_deg, where);
      read_opt(cj, "hfov_deg", c.hfov_deg, where);
      if (cj.contains("offset")) {
        const auto o = cj.at("offset").get<std::vector<double>>();
        if (o.size() != 3) throw UsageError(where + ": camera offset needs 3 values");
        c.offset = Vec3(o[0], o[1], o[2]);
      }
      s.cameras.push_back(c);
    }
  }
  read_opt(j, "max_range", s.max_range, where);
  read_opt(j, "texture_seed", s.texture_seed, where);
  read_opt(j, "road_halfwidth", s.road_halfwidth, where);
  s.validate();
  return s;
}

SyntheticScene SyntheticScene::rolling_preset() {
  SyntheticScene s;
  s.waves = {{0.18, 1.0 / 31.0, 0.0, 0.4}, {0.08, 1.0 / 23.0, 1.0 / 29.0, 1.3}, {0.04, 0.0, 1.0 / 17.0, 2.1}};
  return s;
}

SyntheticScene SyntheticScene::steep_preset() {
  SyntheticScene s;
  s.z0 = -0.8;
  s.gx = 7.8 / 80.0;
  s.waves = {{0.15, 0.0, 1.0 / 24.0, 0.7}, {0.10, 1.0 / 37.0, 0.0, 0.2}};
  return s;
}

bool intersect_surface(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir, double max_range, double& t) {
  const double dnorm = dir.norm();
  if (!(dnorm > 0.0)) return false;
  const double lip = std::abs(dir.z()) + scene.gradient_bound() * std::hypot(dir.x(), dir.y());
  const double t_max = max_range / dnorm;
  const double min_step = 0.01 / dnorm;
  auto f = [&](double s) {
    const Vec3 p = origin + s * dir;
    return p.z() - scene.elevation(p.x(), p.y());
  };
  double lo = 0.0;
  double f_lo = f(lo);
  if (!(f_lo > 0.0)) return false;
  double hi = 0.0;
  while (true) {
    const double step = lip > 0.0 ? std::max(f_lo / lip, min_step) : min_step;
    hi = std::min(lo + step, t_max);
    const double f_hi = f(hi);
    if (f_hi <= 0.0) break;
    if (hi >= t_max) return false;
    lo = hi;
    f_lo = f_hi;
  }
  // Bracket [lo, hi] has f(lo) > 0 >= f(hi).
  while ((hi - lo) * dnorm > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  t = 0.5 * (lo + hi);
  return true;
}

SyntheticRender render_synthetic_view(const SyntheticScene& scene, const SE3Pose& camera_to_world,
                                      const CameraIntrinsics& K) {
  SyntheticRender out{ImageF(K.width, K.height, 3), ImageU8(K.width, K.height, 1, kIgnoreClass),
                      ImageD(K.width, K.height, 1, 0.0)};
  const Mat3& R = camera_to_world.rotation;
  const Vec3& o = camera_to_world.translation;
  parallel_for(static_cast<std::size_t>(K.height), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    for (int jc = 0; jc < K.width; ++jc) {
      const Vec3 ray_cam((jc + 0.5 - K.cx) / K.fx, (i + 0.5 - K.cy) / K.fy, 1.0);
      const Vec3 dir = R * ray_cam;
      double t = 0.0;
      Vec3 color = kSkyColor;
      if (intersect_surface(scene, o, dir, scene.max_range, t) && t > kNearPlane) {
        const Vec3 p = o + t * dir;
        color = scene.color_at(p.x(), p.y());
        out.labels.at(i, jc) = static_cast<std::uint8_t>(scene.class_at(p.x(), p.y()));
        out.depth.at(i, jc) = t;
      }
      for (int c = 0; c < 3; ++c) out.image.at(i, jc, c) = static_cast<float>(color[c]);
    }
  });
  return out;
}

std::vector<ClassInfo> synthetic_classes() {
  return {{kRoad, "road", false, true},
          {kLaneMarking, "lane_marking", false, true},
          {kCrosswalk, "crosswalk", false, true},
          {kSidewalk, "sidewalk", false, true}};
}

namespace {

double frame_along(const SyntheticScene& scene, int k, int n) {
  return n > 1 ? scene.path_length * static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
}

std::string frame_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", k);
  return buf;
}

}  // namespace

DatasetManifest synthetic_manifest_skeleton(const SyntheticScene& scene, const SynthConfig& config) {
  DatasetManifest m;
  m.scene_id = "synthetic";
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    m.cameras.push_back({scene.cameras[c].id, scene.camera_intrinsics(c, config.width, config.height),
                         scene.camera_extrinsic(c)});
  }
  const auto ncam = static_cast<int>(scene.cameras.size());
  for (int k = 0; k < config.n_views; ++k) {
    FrameInfo f;
    f.timestamp = 0.1 * k;
    f.camera_id = scene.cameras[static_cast<std::size_t>(k % ncam)].id;
    f.ego_pose = scene.ego_pose(frame_along(scene, k, config.n_views));
    f.image = "images/" + frame_name(k) + ".png";
    f.semantics = "semantics/" + frame_name(k) + ".png";
    if (config.depth_samples_per_view > 0) f.depth = "depth/" + frame_name(k) + ".f32";
    m.frames.push_back(std::move(f));
  }
  m.classes = synthetic_classes();
  return m;
}

SyntheticBundle generate_synthetic(const SyntheticScene& scene, const SynthConfig& config, const fs::path& out_root) {
  scene.validate();
  if (config.n_views < 1) throw UsageError("synth: n_views must be at least 1");
  if (config.width < 1 || config.height < 1) throw UsageError("synth: image size must be positive");
  if (config.depth_samples_per_view < 0) throw UsageError("synth: depth_samples_per_view must be non-negative");
  if (!(config.perturb_rot_deg >= 0.0) || !(config.perturb_trans_m >= 0.0)) {
    throw UsageError("synth: perturbations must be non-negative");
  }
  if (!(config.grid_step > 0.0)) throw UsageError("synth: grid_step must be positive");

  SyntheticBundle bundle;
  bundle.manifest = synthetic_manifest_skeleton(scene, config);
  std::mt19937_64 rng(config.seed);

  for (CameraInfo& cam : bundle.manifest.cameras) {
    bundle.true_extrinsics.push_back(cam.extrinsic);
    SE3Pose err;
    if (config.perturb_rot_deg > 0.0) err.rotation = rodrigues(random_unit(rng) * config.perturb_rot_deg * kDeg);
    if (config.perturb_trans_m > 0.0) err.translation = random_unit(rng) * config.perturb_trans_m;
    if (config.perturb_rot_deg > 0.0 || config.perturb_trans_m > 0.0) cam.extrinsic = cam.extrinsic * err;
  }

  for (const char* sub : {"images", "semantics", "depth", "gt"}) fs::create_directories(out_root / sub);

  std::vector<Vec2> trajectory;
  for (std::size_t k = 0; k < bundle.manifest.frames.size(); ++k) {
    const FrameInfo& f = bundle.manifest.frames[k];
    const auto ci = static_cast<std::size_t>(bundle.manifest.camera_index(f.camera_id));
    const CameraIntrinsics& K = bundle.manifest.cameras[ci].intrinsics;
    const SE3Pose cam = f.ego_pose * bundle.true_extrinsics[ci];
    trajectory.emplace_back(f.ego_pose.translation.x(), f.ego_pose.translation.y());
    const SyntheticRender r = render_synthetic_view(scene, cam, K);
    ImageU8 bytes(K.width, K.height, 3);
    for (std::size_t i = 0; i < r.image.data.size(); ++i) bytes.data[i] = to_byte(r.image.data[i]);
    write_png(out_root / f.image, bytes);
    write_png(out_root / f.semantics, r.labels);
    if (config.depth_samples_per_view > 0) {
      std::vector<std::size_t> hits;
      for (std::size_t p = 0; p < r.depth.pixel_count(); ++p) {
        if (r.depth.data[p] > 0.0) hits.push_back(p);
      }
      std::vector<DepthSample> samples;
      const std::size_t want = std::min(hits.size(), static_cast<std::size_t>(config.depth_samples_per_view));
      // Partial Fisher-Yates with an explicit draw keeps the choice
      // independent of library distribution details.
      for (std::size_t s = 0; s < want; ++s) {
        const std::size_t j = s + static_cast<std::size_t>(rng() % (hits.size() - s));
        std::swap(hits[s], hits[j]);
        const std::size_t p = hits[s];
        const int row = static_cast<int>(p / static_cast<std::size_t>(K.width));
        const int col = static_cast<int>(p % static_cast<std::size_t>(K.width));
        samples.push_back({static_cast<float>(col + 0.5), static_cast<float>(row + 0.5), static_cast<float>(r.depth.data[p])});
      }
      write_sparse_depth(out_root / f.depth, samples);
    }
  }
  write_manifest(out_root, bundle.manifest);

  write_json(out_root / "gt" / "scene.json", scene.to_json());
  json ex = json::object();
  for (std::size_t c = 0; c < bundle.manifest.cameras.size(); ++c) {
    ex[bundle.manifest.cameras[c].id] = {{"true", pose_to_json(bundle.true_extrinsics[c])},
                                         {"perturbed", pose_to_json(bundle.manifest.cameras[c].extrinsic)}};
  }
  write_json(out_root / "gt" / "extrinsics.json", ex);

  const Bounds b = footprint_from_trajectory(trajectory, 10.0);
  const int nx = static_cast<int>(std::floor(b.width() / config.grid_step + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(b.height() / config.grid_step + 1e-9)) + 1;
  std::vector<float> grid(static_cast<std::size_t>(nx) * ny);
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      grid[static_cast<std::size_t>(r) * nx + c] =
          static_cast<float>(scene.elevation(b.xmin + c * config.grid_step, b.ymin + r * config.grid_step));
    }
  }
  write_f32(out_root / "gt" / "elevation_grid.f32", grid);
  write_json(out_root / "gt" / "elevation_grid.json", {{"xmin", b.xmin},
                                                       {"ymin", b.ymin},
                                                       {"step", config.grid_step},
                                                       {"nx", nx},
                                                       {"ny", ny},
                                                       {"dtype", "float32"},
                                                       {"order", "row-major, rows along +y"},
                                                       {"units", "meters"}});
  return bundle;
}

PointCloud export_groundtruth_pointcloud(const SyntheticScene& scene, const Bounds& bounds, double density) {
  if (!(density > 0.0)) throw UsageError("export_groundtruth_pointcloud: density must be positive");
  const double step = 1.0 / density;
  const int nx = static_cast<int>(std::floor(bounds.width() / step + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(bounds.height() / step + 1e-9)) + 1;
  PointCloud pc;
  pc.points.reserve(static_cast<std::size_t>(nx) * ny);
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      const double x = bounds.xmin + c * step;
      const double y = bounds.ymin + r * step;
      pc.points.emplace_back(x, y, scene.elevation(x, y));
      pc.classes.push_back(scene.class_at(x, y));
    }
  }
  return pc;
}

BevReference reference_bev(const SyntheticScene& scene, const BevMaps& like) {
  const int W = like.rgb.width;
  const int H = like.rgb.height;
  BevReference ref{ImageF(W, H, 3), ImageU8(W, H, 1), ImageF(W, H, 1)};
  parallel_for(static_cast<std::size_t>(H), [&](std::size_t row) {
    const int r = static_cast<int>(row);
    for (int c = 0; c < W; ++c) {
      const Vec2 p = like.pixel_center(r, c);
      const Vec3 col = scene.color_at(p.x(), p.y());
      for (int k = 0; k < 3; ++k) ref.rgb.at(r, c, k) = static_cast<float>(col[k]);
      ref.classes.at(r, c) = static_cast<std::uint8_t>(scene.class_at(p.x(), p.y()));
      ref.elevation.at(r, c) = static_cast<float>(scene.elevation(p.x(), p.y()));
    }
  });
  return ref;
}

PoseError pose_error(const SE3Pose& estimate, const SE3Pose& truth) {
  const SE3Pose e = estimate.inverse() * truth;
  return {rotation_angle(e.rotation) / kDeg, e.translation.norm()};
}

}  // namespace roadmesh
