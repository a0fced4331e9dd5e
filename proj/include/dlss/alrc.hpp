#pragma once

namespace dlss {

/// Running raw moments of a loss stream. Defaults are the initialization used
/// for every clipping layer in the two-stage and one-stage recipes.
struct AlrcState {
  static constexpr double kVarianceFloor = 1e-8;

  double mu1 = 25.0;
  double mu2 = 30.0;
  double beta1 = 0.999;
  double beta2 = 0.999;
  double n = 3.0;  // threshold in standard deviations

  // mu1 + n * sqrt(max(mu2 - mu1^2, floor))
  double threshold() const;
  void validate() const;
  bool operator==(const AlrcState&) const = default;
};

struct AlrcResult {
  double effective_loss;
  // Multiplier to apply to the raw loss gradient; lies in (0, 1].
  double grad_scale;
  AlrcState state;
};

// Clips `loss` at the current threshold and advances the moments with the
// clipped value. Throws InvalidInput on negative or non-finite loss.
AlrcResult alrc_apply(double loss, const AlrcState& state);

inline double alrc_mu1(const AlrcState& state) { return state.mu1; }

}  // namespace dlss
