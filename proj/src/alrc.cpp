#include "dlss/alrc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dlss/error.hpp"

namespace dlss {

double AlrcState::threshold() const { return mu1 + n * std::sqrt(std::max(mu2 - mu1 * mu1, kVarianceFloor)); }

void AlrcState::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw InvalidInput("alrc: decay rates must lie in (0,1)");
  if (!(n > 0.0)) throw InvalidInput("alrc: n must be positive");
  if (!std::isfinite(mu1) || !std::isfinite(mu2)) throw InvalidInput("alrc: moments must be finite");
}

AlrcResult alrc_apply(double loss, const AlrcState& state) {
  if (!std::isfinite(loss) || loss < 0.0) throw InvalidInput("alrc: loss must be finite and non-negative, got " + std::to_string(loss));
  state.validate();

  const double t = state.threshold();
  AlrcResult out{loss, 1.0, state};
  if (loss > t) {
    // Keep grad_scale * loss == effective_loss bit-exactly without exceeding t.
    double scale = t / loss;
    while (scale * loss > t) scale = std::nextafter(scale, 0.0);
    out.grad_scale = scale;
    out.effective_loss = scale * loss;
  }
  const double used = out.effective_loss;
  out.state.mu1 = state.beta1 * state.mu1 + (1.0 - state.beta1) * used;
  out.state.mu2 = state.beta2 * state.mu2 + (1.0 - state.beta2) * used * used;
  return out;
}

}  // namespace dlss
