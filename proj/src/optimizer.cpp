#include "emocolor/optimizer.hpp"

#include <cmath>
#include <string>

#include "emocolor/error.hpp"

namespace emocolor {

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    fail(ErrorKind::kInvalidArgument, "adam_step: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      fail(ErrorKind::kNumerical, "adam_step: non-finite gradient at index " + std::to_string(i) +
                                      " (value " + std::to_string(grad[i]) + ", step " +
                                      std::to_string(state.t + 1) + ")");
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace emocolor
