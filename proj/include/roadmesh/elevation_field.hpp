#pragma once

// Road elevation as a coordinate network: z = MLP(encode(x, y)).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "roadmesh/geometry.hpp"
#include "roadmesh/mesh.hpp"
#include "roadmesh/optimizer.hpp"

namespace roadmesh {

// Features: [x^, y^, then per frequency k: sin(2^k pi x^), cos(2^k pi x^),
// sin(2^k pi y^), cos(2^k pi y^)] with (x^, y^) the bounds mapped to [-1,1]^2.
struct PositionalEncoding {
  int num_freqs = 5;
  Bounds bounds{-1.0, -1.0, 1.0, 1.0};

  int dim() const { return 4 * num_freqs + 2; }
  Vec2 normalize(const Vec2& xy) const;
  void encode(const Vec2& xy, double* out) const;
  // dim x n, one column per point.
  Eigen::MatrixXd encode(std::span<const Vec2> xy) const;
};

struct MlpConfig {
  int hidden_layers = 8;
  int width = 128;
};

class ElevationField {
 public:
  // Kaiming-uniform hidden layers, zero biases, zero output layer (flat z=0).
  ElevationField(PositionalEncoding encoding, MlpConfig config, std::uint64_t seed = 0);

  const PositionalEncoding& encoding() const { return encoding_; }
  const MlpConfig& config() const { return config_; }

  // Evaluates and caches activations for a following backward().
  std::vector<double> forward(std::span<const Vec2> xy);
  // Evaluates without touching the cache.
  std::vector<double> evaluate(std::span<const Vec2> xy) const;

  // Parameter gradient of sum_i upstream_i * z_i for the cached batch.
  // Throws UsageError if the cache does not match upstream's size.
  std::vector<double> backward(std::span<const double> upstream_dz) const;
  void invalidate_cache() { cached_points_ = 0; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  int layer_count() const { return static_cast<int>(layers_.size()); }
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  bool all_finite() const;

  // Little-endian float32 blob behind a JSON header.
  void save(const std::filesystem::path& path) const;
  static ElevationField load(const std::filesystem::path& path);

  // Points per fixed-size evaluation block. Every block is padded to this
  // width, so a point's value never depends on which batch it came in.
  static constexpr int kBlock = 256;

 private:
  struct Layer {
    int in = 0;
    int out = 0;
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
  };

  void run_block(const Eigen::MatrixXd& input, std::vector<Eigen::MatrixXd>* acts, Eigen::MatrixXd& out) const;

  PositionalEncoding encoding_;
  MlpConfig config_;
  std::vector<Layer> layers_;
  std::vector<double> params_;

  // Cached block activations: per block, per layer (input then hidden outputs).
  std::vector<std::vector<Eigen::MatrixXd>> cache_;
  std::size_t cached_points_ = 0;
};

// Lateral samples at +-k*step (|k*step| <= halfwidth) along each pose's
// body y axis, lowered to ego z - ego_height.
std::vector<Vec3> pretrain_points_from_trajectory(std::span<const SE3Pose> ego_poses, double lateral_halfwidth = 6.0,
                                                  double lateral_step = 0.5, double ego_height = 1.7);

struct PretrainReport {
  double initial_rmse = 0.0;
  double final_rmse = 0.0;
  std::vector<double> checkpoint_rmse;  // every check_interval iterations
  // No checkpoint rose more than 5% and more than kMonotoneSlack meters above
  // its predecessor.
  bool monotone = true;
};

inline constexpr double kMonotoneSlack = 1e-3;

// Full-batch Adam on the squared z error. Throws NumericError on divergence.
PretrainReport pretrain(ElevationField& field, std::span<const Vec3> points, int iterations, double lr,
                        int check_interval = 100, const AdamConfig& adam = {});

// Root mean squared z error of the field on points.
double field_rmse(const ElevationField& field, std::span<const Vec3> points);

}  // namespace roadmesh
