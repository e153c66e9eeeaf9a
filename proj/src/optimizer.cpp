#include "gsc/optimizer.hpp"

#include <cmath>

#include "gsc/errors.hpp"

namespace gsc {

void radam_step(std::span<double> params, std::span<const double> grads,
                RAdamState& state, const RAdamConfig& config,
                std::span<const ParamSegment> segments) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw shape_error("radam_step: parameter/gradient/state sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::string name = "parameter " + std::to_string(i);
      for (const ParamSegment& seg : segments) {
        if (i >= seg.begin && i < seg.end) {
          name = seg.name + "[" + std::to_string(i - seg.begin) + "]";
          break;
        }
      }
      throw training_error("non-finite gradient at " + name);
    }
  }

  const long t = ++state.step;
  const double beta1 = config.beta1;
  const double beta2 = config.beta2;
  const double beta1_t = std::pow(beta1, static_cast<double>(t));
  const double beta2_t = std::pow(beta2, static_cast<double>(t));
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double rho_t =
      rho_inf - 2.0 * static_cast<double>(t) * beta2_t / (1.0 - beta2_t);

  const bool rectified = rho_t > 4.0;
  double rect = 0.0;
  if (rectified) {
    rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                     ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / (1.0 - beta1_t);
    if (rectified) {
      const double v_hat = std::sqrt(state.v[i] / (1.0 - beta2_t));
      params[i] -= config.lr * rect * m_hat / (v_hat + config.eps);
    } else {
      params[i] -= config.lr * m_hat;
    }
  }
}

}  // namespace gsc
