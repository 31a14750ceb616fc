#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace roadmesh {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments and a per-element step count. Per-element counts let
// sparse updates (only the parameters of the active sub-area) use the
// correct bias correction.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::vector<std::uint32_t> t;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0), t(n, 0) {}
  std::size_t size() const { return m.size(); }
};

// Dense Adam step over every element. Throws NumericError naming `group`
// (and leaves params/state untouched) when a gradient is not finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config, const std::string& group = "params");

// Sparse variant: grads holds `width` values per row listed in rows; only those
// parameter rows (and their state) change.
void adam_step_rows(std::span<double> params, std::span<const double> grads, std::span<const int> rows, int width,
                    AdamState& state, double lr, const AdamConfig& config, const std::string& group = "params");

}  // namespace roadmesh
