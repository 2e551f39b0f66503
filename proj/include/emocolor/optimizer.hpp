#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace emocolor {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for a flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place. Throws Error(kNumerical) naming
/// the first non-finite gradient entry; parameters and state are untouched in
/// that case.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg);

}  // namespace emocolor
