#include "dlss/deconv.hpp"

#include <cmath>

#include "dlss/error.hpp"

namespace dlss {

void DeconvConfig::validate() const {
  if (iterations < 1) throw InvalidInput("deconv: iterations must be >= 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw InvalidInput("deconv: decay must be in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidInput("deconv: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidInput("deconv: beta2 must be in [0, 1)");
  if (!(eta0 > 0.0)) throw InvalidInput("deconv: eta0 must be positive");
  if (!(epsilon > 0.0)) throw InvalidInput("deconv: epsilon must be positive");
}

void validate_kernel(const BlurKernel& k) {
  if (k.size < 1 || k.size % 2 == 0) throw InvalidInput("kernel size must be odd");
  if (k.weights.size() != static_cast<std::size_t>(k.size) * k.size) throw InvalidInput("kernel weight count mismatch");
  double total = 0.0;
  for (double w : k.weights) total += w;
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("kernel weights must sum to 1");
  const int n = k.size;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double w = k.at(i, j);
      if (w != k.at(j, i) || w != k.at(n - 1 - i, j) || w != k.at(i, n - 1 - j)) {
        throw InvalidInput("kernel must be symmetric under flips and transpose");
      }
    }
  }
}

std::vector<double> blur_gradient(const Micrograph& x, const Micrograph& residual, const BlurKernel& k) {
  if (x.height() != residual.height() || x.width() != residual.width()) {
    throw InvalidInput("blur_gradient: residual shape does not match x");
  }
  std::vector<double> g(x.size());
  correlate_reflect_adjoint<double>(x.height(), x.width(), residual.values(), k, g);
  const double scale = 2.0 / static_cast<double>(x.size());
  for (double& v : g) v *= scale;
  return g;
}

Micrograph deconvolve(const Micrograph& blurred, const BlurKernel& k, const DeconvConfig& cfg,
                      std::vector<double>* objective) {
  cfg.validate();
  validate_kernel(k);
  if (blurred.empty()) throw InvalidInput("deconvolve: empty image");

  const int h = blurred.height();
  const int w = blurred.width();
  const std::size_t n = blurred.size();
  const auto b = blurred.values();

  Micrograph x = blurred;
  std::vector<double> bx(n), r(n), g(n);
  std::vector<double> m(n, 0.0), v(n, 0.0);
  const double scale = 2.0 / static_cast<double>(n);

  if (objective != nullptr) {
    objective->clear();
    objective->reserve(cfg.iterations + 1);
  }
  auto residual = [&] {
    correlate_reflect<double>(h, w, x.values(), k, bx);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = bx[i] - b[i];
      s += r[i] * r[i];
    }
    return s / static_cast<double>(n);
  };

  double b1t = 1.0;
  double b2t = 1.0;
  double eta = cfg.eta0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double obj = residual();
    if (objective != nullptr) objective->push_back(obj);
    correlate_reflect_adjoint<double>(h, w, r, k, g);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    auto xs = x.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mh = m[i] / (1.0 - b1t);
      const double vh = v[i] / (1.0 - b2t);
      xs[i] -= eta * mh / (std::sqrt(vh) + cfg.epsilon);
    }
    eta *= cfg.decay;
  }
  if (objective != nullptr) objective->push_back(residual());
  return x;
}

}  // namespace dlss
