#include "roadmesh/optimizer.hpp"

#include <cmath>

#include "roadmesh/error.hpp"

namespace roadmesh {

namespace {

// Bias-correction denominators, memoized on the step count since most
// elements in one call share it.
struct BiasCorrection {
  const AdamConfig& c;
  std::uint32_t t = 0;
  double one_minus_b1t = 0.0;
  double one_minus_b2t = 0.0;

  void at(std::uint32_t step) {
    if (step == t) return;
    t = step;
    one_minus_b1t = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    one_minus_b2t = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  }
};

inline void update(double& p, double g, double& m, double& v, std::uint32_t& t, double lr, BiasCorrection& bc) {
  const AdamConfig& c = bc.c;
  ++t;
  bc.at(t);
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  const double mhat = m / bc.one_minus_b1t;
  const double vhat = v / bc.one_minus_b2t;
  p -= lr * mhat / (std::sqrt(vhat) + c.eps);
}

void check_finite(std::span<const double> grads, const std::string& group) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient in parameter group '" + group + "' at element " + std::to_string(i));
    }
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config, const std::string& group) {
  if (params.size() != grads.size() || state.size() != params.size()) {
    throw UsageError("adam_step: size mismatch in group '" + group + "'");
  }
  check_finite(grads, group);
  BiasCorrection bc{config};
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i], grads[i], state.m[i], state.v[i], state.t[i], lr, bc);
  }
}

void adam_step_rows(std::span<double> params, std::span<const double> grads, std::span<const int> rows, int width,
                    AdamState& state, double lr, const AdamConfig& config, const std::string& group) {
  const auto w = static_cast<std::size_t>(width);
  if (grads.size() != rows.size() * w || state.size() != params.size()) {
    throw UsageError("adam_step_rows: size mismatch in group '" + group + "'");
  }
  check_finite(grads, group);
  BiasCorrection bc{config};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t base = static_cast<std::size_t>(rows[r]) * w;
    for (std::size_t k = 0; k < w; ++k) {
      const std::size_t i = base + k;
      update(params[i], grads[r * w + k], state.m[i], state.v[i], state.t[i], lr, bc);
    }
  }
}

}  // namespace roadmesh
