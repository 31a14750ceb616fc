#include "roadmesh/elevation_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "roadmesh/error.hpp"
#include "roadmesh/parallel.hpp"

namespace roadmesh {

Vec2 PositionalEncoding::normalize(const Vec2& xy) const {
  return {2.0 * (xy.x() - bounds.xmin) / bounds.width() - 1.0, 2.0 * (xy.y() - bounds.ymin) / bounds.height() - 1.0};
}

void PositionalEncoding::encode(const Vec2& xy, double* out) const {
  const Vec2 n = normalize(xy);
  out[0] = n.x();
  out[1] = n.y();
  double freq = std::numbers::pi;
  for (int k = 0; k < num_freqs; ++k) {
    double* o = out + 2 + 4 * k;
    o[0] = std::sin(freq * n.x());
    o[1] = std::cos(freq * n.x());
    o[2] = std::sin(freq * n.y());
    o[3] = std::cos(freq * n.y());
    freq *= 2.0;
  }
}

Eigen::MatrixXd PositionalEncoding::encode(std::span<const Vec2> xy) const {
  Eigen::MatrixXd out(dim(), static_cast<Eigen::Index>(xy.size()));
  for (std::size_t i = 0; i < xy.size(); ++i) encode(xy[i], out.col(static_cast<Eigen::Index>(i)).data());
  return out;
}

namespace {

// Uniform in [0, 1) from 53 random bits; independent of the standard
// library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

constexpr char kFieldMagic[8] = {'R', 'M', 'F', 'I', 'E', 'L', 'D', '1'};

}  // namespace

ElevationField::ElevationField(PositionalEncoding encoding, MlpConfig config, std::uint64_t seed)
    : encoding_(encoding), config_(config) {
  if (config_.hidden_layers < 1 || config_.width < 1) throw UsageError("elevation MLP needs >=1 hidden layer of width >=1");
  if (encoding_.num_freqs < 0) throw UsageError("positional encoding frequency count must be >= 0");
  if (!(encoding_.bounds.width() > 0.0) || !(encoding_.bounds.height() > 0.0)) {
    throw UsageError("positional encoding bounds are degenerate");
  }
  std::size_t offset = 0;
  int in = encoding_.dim();
  for (int l = 0; l <= config_.hidden_layers; ++l) {
    const int out = (l == config_.hidden_layers) ? 1 : config_.width;
    Layer layer{in, out, offset, offset + static_cast<std::size_t>(in) * out};
    offset = layer.b_offset + static_cast<std::size_t>(out);
    layers_.push_back(layer);
    in = out;
  }
  params_.assign(offset, 0.0);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const Layer& layer = layers_[static_cast<std::size_t>(l)];
    const double bound = std::sqrt(6.0 / layer.in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(layer.in) * layer.out; ++i) {
      params_[layer.w_offset + i] = bound * (2.0 * unit_uniform(rng) - 1.0);
    }
  }
}

Eigen::Map<Eigen::MatrixXd> ElevationField::weight(int l) {
  const Layer& layer = layers_.at(static_cast<std::size_t>(l));
  return {params_.data() + layer.w_offset, layer.out, layer.in};
}
Eigen::Map<Eigen::VectorXd> ElevationField::bias(int l) {
  const Layer& layer = layers_.at(static_cast<std::size_t>(l));
  return {params_.data() + layer.b_offset, layer.out};
}
Eigen::Map<const Eigen::MatrixXd> ElevationField::weight(int l) const {
  const Layer& layer = layers_.at(static_cast<std::size_t>(l));
  return {params_.data() + layer.w_offset, layer.out, layer.in};
}
Eigen::Map<const Eigen::VectorXd> ElevationField::bias(int l) const {
  const Layer& layer = layers_.at(static_cast<std::size_t>(l));
  return {params_.data() + layer.b_offset, layer.out};
}

bool ElevationField::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double p) { return std::isfinite(p); });
}

void ElevationField::run_block(const Eigen::MatrixXd& input, std::vector<Eigen::MatrixXd>* acts,
                               Eigen::MatrixXd& out) const {
  Eigen::MatrixXd h = input;
  if (acts) acts->assign(1, input);
  for (int l = 0; l < config_.hidden_layers; ++l) {
    Eigen::MatrixXd a = weight(l) * h;
    a.colwise() += bias(l);
    h = a.cwiseMax(0.0);
    if (acts) acts->push_back(h);
  }
  out = weight(config_.hidden_layers) * h;
  out.array() += bias(config_.hidden_layers)(0);
}

namespace {

std::size_t block_count(std::size_t n) {
  return (n + ElevationField::kBlock - 1) / ElevationField::kBlock;
}

Eigen::MatrixXd encode_block(const PositionalEncoding& pe, std::span<const Vec2> xy, std::size_t block) {
  Eigen::MatrixXd input = Eigen::MatrixXd::Zero(pe.dim(), ElevationField::kBlock);
  const std::size_t begin = block * ElevationField::kBlock;
  const std::size_t end = std::min(xy.size(), begin + ElevationField::kBlock);
  for (std::size_t i = begin; i < end; ++i) pe.encode(xy[i], input.col(static_cast<Eigen::Index>(i - begin)).data());
  return input;
}

}  // namespace

std::vector<double> ElevationField::forward(std::span<const Vec2> xy) {
  const std::size_t nb = block_count(xy.size());
  std::vector<double> z(xy.size());
  cache_.resize(nb);
  parallel_for(nb, [&](std::size_t b) {
    Eigen::MatrixXd out;
    run_block(encode_block(encoding_, xy, b), &cache_[b], out);
    const std::size_t begin = b * kBlock;
    const std::size_t end = std::min(xy.size(), begin + kBlock);
    for (std::size_t i = begin; i < end; ++i) z[i] = out(0, static_cast<Eigen::Index>(i - begin));
  });
  cached_points_ = xy.size();
  return z;
}

std::vector<double> ElevationField::evaluate(std::span<const Vec2> xy) const {
  const std::size_t nb = block_count(xy.size());
  std::vector<double> z(xy.size());
  parallel_for(nb, [&](std::size_t b) {
    Eigen::MatrixXd out;
    run_block(encode_block(encoding_, xy, b), nullptr, out);
    const std::size_t begin = b * kBlock;
    const std::size_t end = std::min(xy.size(), begin + kBlock);
    for (std::size_t i = begin; i < end; ++i) z[i] = out(0, static_cast<Eigen::Index>(i - begin));
  });
  return z;
}

std::vector<double> ElevationField::backward(std::span<const double> upstream_dz) const {
  if (cached_points_ == 0 || upstream_dz.size() != cached_points_) {
    throw UsageError("ElevationField::backward called without a matching forward batch");
  }
  const std::size_t nb = block_count(upstream_dz.size());
  // Contiguous block groups reduced in group order: the summation tree depends
  // only on the batch size, never on the worker count.
  const std::size_t groups = std::min<std::size_t>(nb, 8);
  std::vector<std::vector<double>> partial(groups, std::vector<double>(params_.size(), 0.0));
  const int L = config_.hidden_layers;
  parallel_for(groups, [&](std::size_t g) {
    std::vector<double>& grad = partial[g];
    const std::size_t b0 = g * nb / groups;
    const std::size_t b1 = (g + 1) * nb / groups;
    for (std::size_t b = b0; b < b1; ++b) {
      const std::vector<Eigen::MatrixXd>& acts = cache_[b];
      Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(1, kBlock);
      const std::size_t begin = b * kBlock;
      const std::size_t end = std::min(upstream_dz.size(), begin + kBlock);
      for (std::size_t i = begin; i < end; ++i) delta(0, static_cast<Eigen::Index>(i - begin)) = upstream_dz[i];
      for (int l = L; l >= 0; --l) {
        const Layer& layer = layers_[static_cast<std::size_t>(l)];
        Eigen::Map<Eigen::MatrixXd> gW(grad.data() + layer.w_offset, layer.out, layer.in);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + layer.b_offset, layer.out);
        const Eigen::MatrixXd& input = acts[static_cast<std::size_t>(l)];
        gW.noalias() += delta * input.transpose();
        for (Eigen::Index c = 0; c < delta.cols(); ++c) {
          for (Eigen::Index r = 0; r < delta.rows(); ++r) gb(r) += delta(r, c);
        }
        if (l > 0) {
          Eigen::MatrixXd back = weight(l).transpose() * delta;
          delta = (input.array() > 0.0).select(back, 0.0);
        }
      }
    }
  });
  std::vector<double> grad(params_.size(), 0.0);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += p[i];
  }
  return grad;
}

void ElevationField::save(const std::filesystem::path& path) const {
  std::vector<int> sizes;
  sizes.push_back(layers_.front().in);
  for (const Layer& l : layers_) sizes.push_back(l.out);
  const nlohmann::json header = {
      {"format", "roadmesh.field.v1"},
      {"dtype", "float32-le"},
      {"layer_sizes", sizes},
      {"hidden_layers", config_.hidden_layers},
      {"width", config_.width},
      {"num_freqs", encoding_.num_freqs},
      {"bounds", {encoding_.bounds.xmin, encoding_.bounds.ymin, encoding_.bounds.xmax, encoding_.bounds.ymax}},
      {"param_count", params_.size()},
  };
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write(kFieldMagic, sizeof(kFieldMagic));
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> blob(params_.begin(), params_.end());
  os.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!os) throw DataError("write failed: " + path.string());
}

ElevationField ElevationField::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open field checkpoint: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kFieldMagic, 8) != 0) {
    throw DataError("not a field checkpoint: " + path.string());
  }
  if (!is.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1u << 20)) {
    throw DataError("corrupt field header: " + path.string());
  }
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt field header in " + path.string() + ": " + e.what());
  }
  PositionalEncoding pe;
  pe.num_freqs = header.at("num_freqs").get<int>();
  const auto b = header.at("bounds").get<std::vector<double>>();
  pe.bounds = Bounds{b.at(0), b.at(1), b.at(2), b.at(3)};
  MlpConfig cfg{header.at("hidden_layers").get<int>(), header.at("width").get<int>()};
  ElevationField field(pe, cfg, 0);
  if (header.at("param_count").get<std::size_t>() != field.params_.size()) {
    throw DataError("field checkpoint parameter count mismatch: " + path.string());
  }
  std::vector<float> blob(field.params_.size());
  if (!is.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)))) {
    throw DataError("truncated field checkpoint: " + path.string());
  }
  std::copy(blob.begin(), blob.end(), field.params_.begin());
  return field;
}

std::vector<Vec3> pretrain_points_from_trajectory(std::span<const SE3Pose> ego_poses, double lateral_halfwidth,
                                                  double lateral_step, double ego_height) {
  if (ego_poses.empty()) throw UsageError("pretrain_points_from_trajectory: no poses");
  if (!(lateral_step > 0.0)) throw UsageError("lateral step must be positive");
  const int n = static_cast<int>(std::floor(lateral_halfwidth / lateral_step + 1e-9));
  std::vector<Vec3> pts;
  pts.reserve(ego_poses.size() * static_cast<std::size_t>(2 * n + 1));
  for (const SE3Pose& pose : ego_poses) {
    const Vec3 lateral = pose.rotation * Vec3::UnitY();
    for (int k = -n; k <= n; ++k) {
      const Vec3 p = pose.translation + lateral * (k * lateral_step);
      pts.emplace_back(p.x(), p.y(), pose.translation.z() - ego_height);
    }
  }
  return pts;
}

double field_rmse(const ElevationField& field, std::span<const Vec3> points) {
  std::vector<Vec2> xy;
  xy.reserve(points.size());
  for (const Vec3& p : points) xy.emplace_back(p.x(), p.y());
  const std::vector<double> z = field.evaluate(xy);
  double sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) sse += (z[i] - points[i].z()) * (z[i] - points[i].z());
  return std::sqrt(sse / static_cast<double>(points.size()));
}

PretrainReport pretrain(ElevationField& field, std::span<const Vec3> points, int iterations, double lr,
                        int check_interval, const AdamConfig& adam) {
  if (points.size() < 10) throw UsageError("pretrain needs at least 10 points");
  std::vector<Vec2> xy;
  xy.reserve(points.size());
  for (const Vec3& p : points) xy.emplace_back(p.x(), p.y());
  AdamState state(field.parameter_count());
  PretrainReport report;
  const double n = static_cast<double>(points.size());
  std::vector<double> dz(points.size());
  double rmse = 0.0;
  for (int it = 0; it <= iterations; ++it) {
    const std::vector<double> z = field.forward(xy);
    double sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double r = z[i] - points[i].z();
      sse += r * r;
      dz[i] = 2.0 * r / n;
    }
    rmse = std::sqrt(sse / n);
    if (!std::isfinite(rmse)) {
      throw NumericError("elevation pretraining diverged at iteration " + std::to_string(it) + " (rmse is not finite)");
    }
    if (it == 0) report.initial_rmse = rmse;
    if (check_interval > 0 && it % check_interval == 0) {
      if (!report.checkpoint_rmse.empty() && rmse > 1.05 * report.checkpoint_rmse.back() &&
          rmse - report.checkpoint_rmse.back() > kMonotoneSlack) {
        report.monotone = false;
      }
      report.checkpoint_rmse.push_back(rmse);
    }
    if (it == iterations) break;
    const std::vector<double> grad = field.backward(dz);
    adam_step(field.parameters(), grad, state, lr, adam, "elevation");
    if (!field.all_finite()) throw NumericError("elevation pretraining produced non-finite parameters");
  }
  field.invalidate_cache();
  report.final_rmse = rmse;
  return report;
}

}  // namespace roadmesh
